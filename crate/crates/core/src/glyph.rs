//! Glyph codec: AIN vector -> PCA point -> three component indices -> bitmap.
//!
//! A glyph is three 8x8 components from a 24-entry atlas stacked top to
//! bottom, giving an 8x24 pixel grid and a code space of 24^3 cells.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::embedding::{dot, EmbeddingTable};
use crate::error::{Error, Result};

/// Number of atlas components, and quantization levels per axis.
pub const COMPONENTS: usize = 24;
/// Size of the glyph code space.
pub const GRID_CELLS: usize = COMPONENTS * COMPONENTS * COMPONENTS;
pub const COMPONENT_SIZE: usize = 8;
pub const GLYPH_WIDTH: usize = COMPONENT_SIZE;
pub const GLYPH_HEIGHT: usize = 3 * COMPONENT_SIZE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct GlyphCode([u8; 3]);

impl GlyphCode {
    pub fn new(c0: u8, c1: u8, c2: u8) -> Result<Self> {
        let code = GlyphCode([c0, c1, c2]);
        if code.0.iter().any(|&c| c as usize >= COMPONENTS) {
            return Err(Error::Range(format!("glyph component out of range in {code}")));
        }
        Ok(code)
    }

    pub fn components(self) -> [u8; 3] {
        self.0
    }

    pub fn l1(self, other: GlyphCode) -> u32 {
        self.0.iter().zip(other.0).map(|(&a, b)| u32::from(a.abs_diff(b))).sum()
    }

    /// All cells in lexicographic order.
    pub fn all() -> impl Iterator<Item = GlyphCode> {
        (0..GRID_CELLS).map(|i| {
            let n = COMPONENTS;
            GlyphCode([(i / (n * n)) as u8, (i / n % n) as u8, (i % n) as u8])
        })
    }
}

impl fmt::Display for GlyphCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.0[0], self.0[1], self.0[2])
    }
}

impl FromStr for GlyphCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Range(format!("malformed glyph code {s:?}"));
        let parts: Vec<u8> = s
            .split('.')
            .map(|p| p.parse::<u8>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        match parts[..] {
            [a, b, c] => GlyphCode::new(a, b, c),
            _ => Err(bad()),
        }
    }
}

impl From<GlyphCode> for String {
    fn from(g: GlyphCode) -> String {
        g.to_string()
    }
}

impl TryFrom<String> for GlyphCode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Top-three principal axes of the Chinese table plus quantization bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub mean: Vec<f64>,
    pub axes: [Vec<f64>; 3],
    /// Variance explained by each axis (covariance eigenvalues), descending.
    pub variances: [f64; 3],
    /// (min, max) of each projected coordinate over the fit table.
    pub bounds: [(f64, f64); 3],
}

impl Projection {
    pub fn fit(table: &EmbeddingTable) -> Result<Self> {
        let (n, dim) = (table.len(), table.dim());
        if n < 4 || dim < 3 {
            return Err(Error::Range(format!(
                "PCA needs at least 4 entries and 3 dimensions, got {n}x{dim}"
            )));
        }
        let mut mean = vec![0.0; dim];
        for (_, v) in table.iter() {
            for (m, &x) in mean.iter_mut().zip(v) {
                *m += f64::from(x);
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);

        let centered = DMatrix::from_fn(n, dim, |i, j| f64::from(table.vector(i)[j]) - mean[j]);
        let cov = (centered.transpose() * &centered) / (n - 1) as f64;
        let eig = SymmetricEigen::new(cov);

        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let top = eig.eigenvalues[order[0]];
        let third = eig.eigenvalues[order[2]];
        if top <= 0.0 || top.is_nan() || third <= top * 1e-12 {
            return Err(Error::Degenerate);
        }

        let axis = |k: usize| -> Vec<f64> {
            let mut a: Vec<f64> = eig.eigenvectors.column(order[k]).iter().copied().collect();
            let norm = dot(&a, &a).sqrt();
            let sign = match a.iter().find(|&&x| x != 0.0) {
                Some(&x) if x < 0.0 => -1.0,
                _ => 1.0,
            };
            a.iter_mut().for_each(|x| *x *= sign / norm);
            a
        };
        let mut proj = Projection {
            mean,
            axes: [axis(0), axis(1), axis(2)],
            variances: [top, eig.eigenvalues[order[1]], third],
            bounds: [(f64::INFINITY, f64::NEG_INFINITY); 3],
        };
        for (_, v) in table.iter() {
            let p = proj.project_unchecked(v);
            for (b, x) in proj.bounds.iter_mut().zip(p) {
                b.0 = b.0.min(x);
                b.1 = b.1.max(x);
            }
        }
        Ok(proj)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn project<V: Copy + Into<f64>>(&self, v: &[V]) -> Result<[f64; 3]> {
        if v.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(self.project_unchecked(v))
    }

    fn project_unchecked<V: Copy + Into<f64>>(&self, v: &[V]) -> [f64; 3] {
        let centered: Vec<f64> = v.iter().zip(&self.mean).map(|(&x, m)| x.into() - m).collect();
        [
            dot(&centered, &self.axes[0]),
            dot(&centered, &self.axes[1]),
            dot(&centered, &self.axes[2]),
        ]
    }

    /// 24 equal-width bins per axis over the fitted bounds; out-of-range
    /// values clamp to the edge bins.
    pub fn quantize(&self, point: [f64; 3]) -> GlyphCode {
        let mut code = [0u8; 3];
        for ((c, v), (lo, hi)) in code.iter_mut().zip(point).zip(self.bounds) {
            let t = (v - lo) / (hi - lo);
            let bin = (COMPONENTS as f64 * t).floor();
            *c = if bin.is_nan() || bin < 0.0 {
                0
            } else {
                bin.min((COMPONENTS - 1) as f64) as u8
            };
        }
        GlyphCode(code)
    }

    pub fn encode<V: Copy + Into<f64>>(&self, v: &[V]) -> Result<GlyphCode> {
        Ok(self.quantize(self.project(v)?))
    }
}

/// The nearest free cell to `code` by L1 distance, ties broken
/// lexicographically. Returns `code` itself when it is free.
pub fn resolve_collision(code: GlyphCode, is_occupied: impl Fn(&GlyphCode) -> bool) -> Result<GlyphCode> {
    if !is_occupied(&code) {
        return Ok(code);
    }
    let [x0, x1, x2] = code.0.map(i32::from);
    let max = COMPONENTS as i32 - 1;
    let span = |x: i32, r: i32| (x - r).max(0)..=(x + r).min(max);
    for r in 1..=3 * max {
        for c0 in span(x0, r) {
            let r1 = r - (c0 - x0).abs();
            for c1 in span(x1, r1) {
                let rem = r1 - (c1 - x1).abs();
                let lo = x2 - rem;
                let hi = x2 + rem;
                for c2 in [lo, hi] {
                    if (0..=max).contains(&c2) {
                        let cand = GlyphCode([c0 as u8, c1 as u8, c2 as u8]);
                        if !is_occupied(&cand) {
                            return Ok(cand);
                        }
                    }
                    if rem == 0 {
                        break;
                    }
                }
            }
        }
    }
    Err(Error::GridFull)
}

/// An 8x8 binary component; bit 7 of each row byte is the leftmost pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Component(pub [u8; COMPONENT_SIZE]);

impl Component {
    pub fn pixel(&self, x: usize, y: usize) -> bool {
        self.0[y] & (0x80 >> x) != 0
    }

    pub fn count(&self) -> u32 {
        self.0.iter().map(|r| r.count_ones()).sum()
    }

    fn from_pixels(pixels: &[(usize, usize)]) -> Self {
        let mut rows = [0u8; COMPONENT_SIZE];
        for &(x, y) in pixels {
            rows[y] |= 0x80 >> x;
        }
        Component(rows)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentAtlas {
    components: Vec<Component>,
}

impl ComponentAtlas {
    /// Validates: exactly 24, pairwise distinct, non-decreasing pixel count.
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.len() != COMPONENTS {
            return Err(Error::InvalidAtlas(format!(
                "expected {COMPONENTS} components, got {}",
                components.len()
            )));
        }
        let distinct: HashSet<&Component> = components.iter().collect();
        if distinct.len() != COMPONENTS {
            return Err(Error::InvalidAtlas("components are not distinct".into()));
        }
        if let Some(i) = (1..COMPONENTS).find(|&i| components[i].count() < components[i - 1].count()) {
            return Err(Error::InvalidAtlas(format!(
                "component {i} is simpler than component {}",
                i - 1
            )));
        }
        Ok(ComponentAtlas { components })
    }

    /// The built-in atlas: strokes (dot, horizontals, verticals, diagonals)
    /// combined into 24 components of increasing complexity.
    pub fn synthetic() -> Self {
        let h = |y: usize, x0: usize, x1: usize| (x0..=x1).map(|x| (x, y)).collect::<Vec<_>>();
        let v = |x: usize, y0: usize, y1: usize| (y0..=y1).map(|y| (x, y)).collect::<Vec<_>>();
        let strokes: [Vec<(usize, usize)>; 9] = [
            vec![(3, 3), (4, 3), (3, 4), (4, 4)],
            h(1, 1, 6),
            h(4, 1, 6),
            h(6, 1, 6),
            v(2, 1, 6),
            v(4, 0, 7),
            v(5, 1, 6),
            (1..=6).map(|i| (i, i)).collect(),
            (1..=6).map(|i| (7 - i, i)).collect(),
        ];
        const RECIPES: [&[usize]; COMPONENTS] = [
            &[0],
            &[1],
            &[2],
            &[5],
            &[7],
            &[8],
            &[0, 1],
            &[0, 2],
            &[1, 3],
            &[2, 5],
            &[4, 6],
            &[7, 8],
            &[1, 4],
            &[3, 6],
            &[2, 7],
            &[5, 8],
            &[1, 2, 3],
            &[4, 5, 6],
            &[0, 4, 6],
            &[1, 5, 3],
            &[2, 4, 6],
            &[0, 1, 3],
            &[2, 7, 8],
            &[1, 4, 6],
        ];
        let mut comps: Vec<Component> = RECIPES
            .iter()
            .map(|recipe| {
                let px: Vec<(usize, usize)> = recipe.iter().flat_map(|&s| strokes[s].iter().copied()).collect();
                Component::from_pixels(&px)
            })
            .collect();
        // Stable: equal counts keep recipe order.
        comps.sort_by_key(Component::count);
        ComponentAtlas::new(comps).expect("built-in atlas is valid")
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Component {
        &self.components[i]
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut comps = Vec::new();
        let mut rows: Vec<u8> = Vec::new();
        let mut flush = |rows: &mut Vec<u8>, ln: usize| -> Result<()> {
            if rows.is_empty() {
                return Ok(());
            }
            if rows.len() != COMPONENT_SIZE {
                return Err(Error::parse(
                    path,
                    ln,
                    format!("component has {} rows, expected {COMPONENT_SIZE}", rows.len()),
                ));
            }
            comps.push(Component(rows.as_slice().try_into().unwrap()));
            rows.clear();
            Ok(())
        };
        let mut last = 0;
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            last = ln;
            let line = line.trim();
            if line.starts_with('#') {
                continue;
            }
            if line.is_empty() {
                flush(&mut rows, ln)?;
                continue;
            }
            if line.len() != COMPONENT_SIZE || !line.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(Error::parse(path, ln, "expected 8 characters of 0/1"));
            }
            let row = line.bytes().fold(0u8, |acc, b| (acc << 1) | u8::from(b == b'1'));
            rows.push(row);
            if rows.len() > COMPONENT_SIZE {
                return Err(Error::parse(path, ln, "component has more than 8 rows"));
            }
        }
        flush(&mut rows, last)?;
        ComponentAtlas::new(comps)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# AIN component atlas: 24 components, 8 rows of 8\n");
        for (i, c) in self.components.iter().enumerate() {
            out.push_str(&format!("\n# {i}\n"));
            for row in c.0 {
                out.push_str(&format!("{row:08b}\n"));
            }
        }
        out
    }
}

/// An 8-wide by 24-tall glyph bitmap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GlyphBitmap(pub [u8; GLYPH_HEIGHT]);

impl GlyphBitmap {
    pub fn pixel(&self, x: usize, y: usize) -> bool {
        self.0[y] & (0x80 >> x) != 0
    }

    pub fn count(&self) -> u32 {
        self.0.iter().map(|r| r.count_ones()).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(GLYPH_HEIGHT * (GLYPH_WIDTH + 1));
        for y in 0..GLYPH_HEIGHT {
            for x in 0..GLYPH_WIDTH {
                out.push(if self.pixel(x, y) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    /// Binary PGM; ink is 0 on a 255 background.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{GLYPH_WIDTH} {GLYPH_HEIGHT}\n255\n").into_bytes();
        for y in 0..GLYPH_HEIGHT {
            for x in 0..GLYPH_WIDTH {
                out.push(if self.pixel(x, y) { 0 } else { 255 });
            }
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {GLYPH_WIDTH} {GLYPH_HEIGHT}\" \
             width=\"{}\" height=\"{}\" shape-rendering=\"crispEdges\">\n",
            GLYPH_WIDTH * 10,
            GLYPH_HEIGHT * 10
        );
        for y in 0..GLYPH_HEIGHT {
            for x in 0..GLYPH_WIDTH {
                if self.pixel(x, y) {
                    out.push_str(&format!(
                        "<rect x=\"{x}\" y=\"{y}\" width=\"1\" height=\"1\" fill=\"black\"/>\n"
                    ));
                }
            }
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Stack components `c0` (top), `c1`, `c2` (bottom).
pub fn render(code: GlyphCode, atlas: &ComponentAtlas) -> GlyphBitmap {
    let mut rows = [0u8; GLYPH_HEIGHT];
    for (band, &c) in code.0.iter().enumerate() {
        let comp = atlas.component(c as usize);
        rows[band * COMPONENT_SIZE..(band + 1) * COMPONENT_SIZE].copy_from_slice(&comp.0);
    }
    GlyphBitmap(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlyphFormat {
    Text,
    Pgm,
    Svg,
}

impl FromStr for GlyphFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(GlyphFormat::Text),
            "pgm" => Ok(GlyphFormat::Pgm),
            "svg" => Ok(GlyphFormat::Svg),
            other => Err(Error::Config(format!("unknown glyph format {other:?}"))),
        }
    }
}

pub fn glyph_bytes(code: GlyphCode, atlas: &ComponentAtlas, format: GlyphFormat) -> Vec<u8> {
    let bmp = render(code, atlas);
    match format {
        GlyphFormat::Text => bmp.to_text().into_bytes(),
        GlyphFormat::Pgm => bmp.to_pgm(),
        GlyphFormat::Svg => bmp.to_svg().into_bytes(),
    }
}

pub fn export_glyph(
    code: GlyphCode,
    atlas: &ComponentAtlas,
    format: GlyphFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, glyph_bytes(code, atlas, format)).map_err(|e| Error::io(path, e))
}

/// Glyphs per contact-sheet row.
pub const SHEET_COLUMNS: usize = 16;

/// PGM contact sheet: glyphs in the given order, left to right, top to
/// bottom, each in a cell with a one-pixel margin.
pub fn contact_sheet(codes: &[GlyphCode], atlas: &ComponentAtlas) -> Vec<u8> {
    let cell_w = GLYPH_WIDTH + 2;
    let cell_h = GLYPH_HEIGHT + 2;
    let cols = codes.len().clamp(1, SHEET_COLUMNS);
    let rows = codes.len().div_ceil(SHEET_COLUMNS).max(1);
    let (w, h) = (cols * cell_w, rows * cell_h);
    let mut px = vec![255u8; w * h];
    for (i, &code) in codes.iter().enumerate() {
        let bmp = render(code, atlas);
        let (ox, oy) = ((i % SHEET_COLUMNS) * cell_w + 1, (i / SHEET_COLUMNS) * cell_h + 1);
        for y in 0..GLYPH_HEIGHT {
            for x in 0..GLYPH_WIDTH {
                if bmp.pixel(x, y) {
                    px[(oy + y) * w + ox + x] = 0;
                }
            }
        }
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&px);
    out
}
