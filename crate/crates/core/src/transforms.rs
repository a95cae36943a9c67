//! Semantic transformations of a perturbation: rotation, scaling, shearing,
//! translation (geometric, applied through bilinear resampling) and
//! contrast/brightness (photometric, `x' = alpha * x + beta`).
//!
//! Geometric parameters compose into one augmented matrix `[A | b]` acting on
//! pixel coordinates measured from the image centre, with `x` the column and
//! `y` the row. Warping is output-driven: every output pixel pulls from the
//! inverse-mapped source location, and anything that lands outside the frame
//! reads as zero.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, Shape};

/// Parameter ranges of the five transformation families. Each range is
/// symmetric around the identity; a range of zero disables that family.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransformSet {
    pub rotation_deg: f64,
    pub translate_x: f64,
    pub translate_y: f64,
    pub scale_pct: f64,
    pub shear_pct: f64,
    pub contrast_pct: f64,
    pub brightness_abs: f64,
}

impl TransformSet {
    /// The set that only contains the identity.
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn rotation(deg: f64) -> Self {
        Self {
            rotation_deg: deg,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rotation", self.rotation_deg),
            ("translate_x", self.translate_x),
            ("translate_y", self.translate_y),
            ("scale", self.scale_pct),
            ("shear", self.shear_pct),
            ("contrast", self.contrast_pct),
            ("brightness", self.brightness_abs),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} range must be finite and >= 0, got {v}")));
            }
        }
        if self.scale_pct >= 100.0 {
            return Err(Error::invalid("scale range must be below 100%"));
        }
        if self.contrast_pct >= 100.0 {
            return Err(Error::invalid("contrast range must be below 100%"));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }

    pub fn contains(&self, s: &TransformSample) -> bool {
        let within = |v: f64, r: f64| v.abs() <= r;
        within(s.theta_deg, self.rotation_deg)
            && within(s.tx, self.translate_x)
            && within(s.ty, self.translate_y)
            && within(s.scale_p, self.scale_pct)
            && within(s.shear_m, self.shear_pct)
            && within((s.contrast_alpha - 1.0) * 100.0, self.contrast_pct * (1.0 + 1e-12))
            && within(s.brightness_beta, self.brightness_abs)
    }
}

impl fmt::Display for TransformSet {
    /// Writes the set in the `R(10), T(2, 2), Sh(2), Sc(2), B(2, 0.001)` notation.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.rotation_deg != 0.0 {
            parts.push(format!("R({})", self.rotation_deg));
        }
        if self.translate_x != 0.0 || self.translate_y != 0.0 {
            parts.push(format!("T({}, {})", self.translate_x, self.translate_y));
        }
        if self.shear_pct != 0.0 {
            parts.push(format!("Sh({})", self.shear_pct));
        }
        if self.scale_pct != 0.0 {
            parts.push(format!("Sc({})", self.scale_pct));
        }
        if self.contrast_pct != 0.0 || self.brightness_abs != 0.0 {
            parts.push(format!("B({}, {})", self.contrast_pct, self.brightness_abs));
        }
        if parts.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&parts.join(", "))
        }
    }
}

impl FromStr for TransformSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NotationParser::new(s).parse()
    }
}

/// Recursive-descent parser for the transform-set notation.
///
/// ```text
/// set   := "none" | item ("," item)*
/// item  := name "(" number ("," number)* ")"
/// name  := "R" | "T" | "Sc" | "Sh" | "B"
/// ```
struct NotationParser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> NotationParser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn err(&self, msg: impl fmt::Display) -> Error {
        Error::Parse {
            line: 0,
            message: format!("transform set `{}` at column {}: {msg}", self.src, self.pos + 1),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.rest().starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format_args!("expected `{c}`")))
        }
    }

    fn ident(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let len = self
            .rest()
            .find(|c: char| !c.is_ascii_alphabetic())
            .unwrap_or(self.rest().len());
        if len == 0 {
            return Err(self.err("expected a transform name"));
        }
        let name = &self.rest()[..len];
        self.pos += len;
        Ok(name)
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
            .unwrap_or(self.rest().len());
        let text = &self.rest()[..len];
        let v: f64 = text
            .parse()
            .map_err(|_| self.err(format_args!("bad number `{text}`")))?;
        self.pos += len;
        Ok(v)
    }

    fn args(&mut self) -> Result<Vec<f64>> {
        self.expect('(')?;
        let mut out = vec![self.number()?];
        while self.eat(',') {
            out.push(self.number()?);
        }
        self.expect(')')?;
        Ok(out)
    }

    fn parse(mut self) -> Result<TransformSet> {
        let mut set = TransformSet::default();
        self.skip_ws();
        if self.rest().is_empty() || self.rest().eq_ignore_ascii_case("none") {
            return Ok(set);
        }
        let mut seen = Vec::new();
        loop {
            let name = self.ident()?;
            if seen.contains(&name) {
                return Err(self.err(format_args!("`{name}` given twice")));
            }
            seen.push(name);
            let args = self.args()?;
            match (name, args.as_slice()) {
                ("R", [t]) => set.rotation_deg = *t,
                ("T", [d]) => (set.translate_x, set.translate_y) = (*d, *d),
                ("T", [x, y]) => (set.translate_x, set.translate_y) = (*x, *y),
                ("Sc", [p]) => set.scale_pct = *p,
                ("Sh", [m]) => set.shear_pct = *m,
                ("B", [a, b]) => (set.contrast_pct, set.brightness_abs) = (*a, *b),
                ("R" | "T" | "Sc" | "Sh" | "B", _) => {
                    return Err(self.err(format_args!("wrong number of arguments for `{name}`")))
                }
                _ => return Err(self.err(format_args!("unknown transform `{name}`"))),
            }
            if !self.eat(',') {
                break;
            }
        }
        self.skip_ws();
        if !self.rest().is_empty() {
            return Err(self.err("trailing input"));
        }
        set.validate()?;
        Ok(set)
    }
}

/// One concrete transformation drawn from a [`TransformSet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSample {
    pub theta_deg: f64,
    pub tx: f64,
    pub ty: f64,
    pub scale_p: f64,
    pub shear_m: f64,
    /// Gain, `1 + contrast_pct / 100`.
    pub contrast_alpha: f64,
    pub brightness_beta: f64,
}

impl Default for TransformSample {
    fn default() -> Self {
        Self::identity()
    }
}

impl TransformSample {
    pub fn identity() -> Self {
        Self {
            theta_deg: 0.0,
            tx: 0.0,
            ty: 0.0,
            scale_p: 0.0,
            shear_m: 0.0,
            contrast_alpha: 1.0,
            brightness_beta: 0.0,
        }
    }

    pub fn rotation(theta_deg: f64) -> Self {
        Self {
            theta_deg,
            ..Self::identity()
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            tx,
            ty,
            ..Self::identity()
        }
    }

    pub fn photometric(contrast_alpha: f64, brightness_beta: f64) -> Self {
        Self {
            contrast_alpha,
            brightness_beta,
            ..Self::identity()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.theta_deg,
            self.tx,
            self.ty,
            self.scale_p,
            self.shear_m,
            self.contrast_alpha,
            self.brightness_beta,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("transform parameters must be finite"));
        }
        if self.contrast_alpha <= 0.0 {
            return Err(Error::invalid(format!(
                "contrast gain must be > 0, got {}",
                self.contrast_alpha
            )));
        }
        Ok(())
    }

    fn is_photometric_identity(&self) -> bool {
        self.contrast_alpha == 1.0 && self.brightness_beta == 0.0
    }
}

/// Augmented 2-D affine map `c' = A c + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedMatrix {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub b1: f64,
    pub b2: f64,
}

impl AugmentedMatrix {
    pub const IDENTITY: AugmentedMatrix = AugmentedMatrix {
        a11: 1.0,
        a12: 0.0,
        a21: 0.0,
        a22: 1.0,
        b1: 0.0,
        b2: 0.0,
    };

    pub fn rotation(theta_deg: f64) -> Self {
        let (s, c) = theta_deg.to_radians().sin_cos();
        Self {
            a11: c,
            a12: -s,
            a21: s,
            a22: c,
            ..Self::IDENTITY
        }
    }

    pub fn scaling(p: f64) -> Self {
        let k = 1.0 + p / 100.0;
        Self {
            a11: k,
            a22: k,
            ..Self::IDENTITY
        }
    }

    /// Horizontal shear with factor `m / 100`.
    pub fn shearing(m: f64) -> Self {
        Self {
            a12: m / 100.0,
            ..Self::IDENTITY
        }
    }

    pub fn translation(x: f64, y: f64) -> Self {
        Self {
            b1: x,
            b2: y,
            ..Self::IDENTITY
        }
    }

    /// Product of the 3x3 augmented forms, `self * rhs` (apply `rhs` first).
    pub fn compose(&self, rhs: &AugmentedMatrix) -> AugmentedMatrix {
        AugmentedMatrix {
            a11: self.a11 * rhs.a11 + self.a12 * rhs.a21,
            a12: self.a11 * rhs.a12 + self.a12 * rhs.a22,
            a21: self.a21 * rhs.a11 + self.a22 * rhs.a21,
            a22: self.a21 * rhs.a12 + self.a22 * rhs.a22,
            b1: self.a11 * rhs.b1 + self.a12 * rhs.b2 + self.b1,
            b2: self.a21 * rhs.b1 + self.a22 * rhs.b2 + self.b2,
        }
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn inverse(&self) -> Result<AugmentedMatrix> {
        let det = self.det();
        if !(det.abs() > 1e-9) {
            return Err(Error::SingularTransform { det });
        }
        let (i11, i12, i21, i22) = (self.a22 / det, -self.a12 / det, -self.a21 / det, self.a11 / det);
        Ok(AugmentedMatrix {
            a11: i11,
            a12: i12,
            a21: i21,
            a22: i22,
            b1: -(i11 * self.b1 + i12 * self.b2),
            b2: -(i21 * self.b1 + i22 * self.b2),
        })
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a11 * x + self.a12 * y + self.b1,
            self.a21 * x + self.a22 * y + self.b2,
        )
    }
}

/// Geometric part of `sample`: rotation * scaling * shearing, plus the
/// translation bias.
pub fn affine_matrix(sample: &TransformSample) -> Result<AugmentedMatrix> {
    sample.validate()?;
    let linear = AugmentedMatrix::rotation(sample.theta_deg)
        .compose(&AugmentedMatrix::scaling(sample.scale_p))
        .compose(&AugmentedMatrix::shearing(sample.shear_m));
    let m = AugmentedMatrix::translation(sample.tx, sample.ty).compose(&linear);
    let det = m.det();
    if !(det.abs() > 1e-9) {
        return Err(Error::SingularTransform { det });
    }
    Ok(m)
}

/// Up to four (source index, weight) pairs per output pixel, shared by all
/// channels.
struct Warp {
    plane: usize,
    taps: Vec<[(u32, f64); 4]>,
    counts: Vec<u8>,
}

impl Warp {
    fn new(height: usize, width: usize, sample: &TransformSample) -> Result<Self> {
        let inv = affine_matrix(sample)?.inverse()?;
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        let plane = height * width;
        let mut taps = vec![[(0u32, 0.0); 4]; plane];
        let mut counts = vec![0u8; plane];
        for row in 0..height {
            for col in 0..width {
                let (sx, sy) = inv.apply(col as f64 - cx, row as f64 - cy);
                let (sx, sy) = (sx + cx, sy + cy);
                let out = row * width + col;
                let mut n = 0;
                for (r, c, w) in bilinear_taps(sx, sy) {
                    if w != 0.0 && r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width {
                        taps[out][n] = ((r as usize * width + c as usize) as u32, w);
                        n += 1;
                    }
                }
                counts[out] = n as u8;
            }
        }
        Ok(Self { plane, taps, counts })
    }

    fn gather(&self, src: &[f64], dst: &mut [f64]) {
        for (out, (taps, &n)) in dst.iter_mut().zip(self.taps.iter().zip(&self.counts)) {
            let taps = &taps[..n as usize];
            *out = match taps.split_first() {
                None => 0.0,
                Some((&(i, w), rest)) => rest
                    .iter()
                    .fold(w * src[i as usize], |acc, &(j, v)| acc + v * src[j as usize]),
            };
        }
    }

    fn scatter(&self, upstream: &[f64], dst: &mut [f64]) {
        for (g, (taps, &n)) in upstream.iter().zip(self.taps.iter().zip(&self.counts)) {
            for &(i, w) in &taps[..n as usize] {
                dst[i as usize] += w * g;
            }
        }
    }
}

/// The four lattice neighbours of `(x, y)` with their bilinear weights
/// `max(0, 1 - |x - m|) * max(0, 1 - |y - n|)`, as `(row, col, weight)`.
fn bilinear_taps(x: f64, y: f64) -> [(i64, i64, f64); 4] {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (c, r) = (x0 as i64, y0 as i64);
    [
        (r, c, (1.0 - fx) * (1.0 - fy)),
        (r, c + 1, fx * (1.0 - fy)),
        (r + 1, c, (1.0 - fx) * fy),
        (r + 1, c + 1, fx * fy),
    ]
}

/// Warps `image` by the geometric part of `sample`, then applies
/// `alpha * x + beta` to every entry.
pub fn apply_transform(image: &ImageTensor, sample: &TransformSample) -> Result<ImageTensor> {
    let shape = image.shape();
    let warp = Warp::new(shape.height, shape.width, sample)?;
    let mut out = vec![0.0; shape.len()];
    for (src, dst) in image
        .data()
        .chunks_exact(warp.plane)
        .zip(out.chunks_exact_mut(warp.plane))
    {
        warp.gather(src, dst);
    }
    if !sample.is_photometric_identity() {
        let (a, b) = (sample.contrast_alpha, sample.brightness_beta);
        for v in &mut out {
            *v = a * *v + b;
        }
    }
    let out = ImageTensor::from_shape(shape, out)?;
    out.check_finite()?;
    Ok(out)
}

/// Pulls a gradient with respect to the transformed image back to the
/// source image: bilinear weights scattered to the source lattice, scaled by
/// the contrast gain.
pub fn transform_input_grad(upstream: &ImageTensor, sample: &TransformSample) -> Result<ImageTensor> {
    let shape = upstream.shape();
    let warp = Warp::new(shape.height, shape.width, sample)?;
    let mut out = vec![0.0; shape.len()];
    for (g, dst) in upstream
        .data()
        .chunks_exact(warp.plane)
        .zip(out.chunks_exact_mut(warp.plane))
    {
        warp.scatter(g, dst);
    }
    if sample.contrast_alpha != 1.0 {
        for v in &mut out {
            *v *= sample.contrast_alpha;
        }
    }
    let out = ImageTensor::from_shape(shape, out)?;
    out.check_finite()?;
    Ok(out)
}

/// Bilinear read of one channel at a real-valued `(x, y)` = (column, row),
/// with zero padding.
pub fn bilinear_sample(image: &ImageTensor, channel: usize, x: f64, y: f64) -> f64 {
    let (h, w) = (image.height() as i64, image.width() as i64);
    bilinear_taps(x, y)
        .into_iter()
        .filter(|&(r, c, _)| r >= 0 && c >= 0 && r < h && c < w)
        .map(|(r, c, wt)| wt * image.at(channel, r as usize, c as usize))
        .sum()
}

/// Sub-gradient of [`bilinear_sample`] with respect to the sampling
/// coordinates, `(d/dx, d/dy)`. At lattice points the right derivative is
/// returned.
pub fn bilinear_coordinate_grad(image: &ImageTensor, channel: usize, x: f64, y: f64) -> (f64, f64) {
    let (h, w) = (image.height() as i64, image.width() as i64);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (c, r) = (x0 as i64, y0 as i64);
    let px = |rr: i64, cc: i64| {
        if rr >= 0 && cc >= 0 && rr < h && cc < w {
            image.at(channel, rr as usize, cc as usize)
        } else {
            0.0
        }
    };
    let (v00, v01, v10, v11) = (px(r, c), px(r, c + 1), px(r + 1, c), px(r + 1, c + 1));
    let dx = (1.0 - fy) * (v01 - v00) + fy * (v11 - v10);
    let dy = (1.0 - fx) * (v10 - v00) + fx * (v11 - v01);
    (dx, dy)
}

/// Source coordinates `(x, y)` that each output pixel of a `height x width`
/// plane reads from under `sample`, in row-major order.
pub fn source_coordinates(height: usize, width: usize, sample: &TransformSample) -> Result<Vec<(f64, f64)>> {
    let inv = affine_matrix(sample)?.inverse()?;
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(height * width);
    for row in 0..height {
        for col in 0..width {
            let (sx, sy) = inv.apply(col as f64 - cx, row as f64 - cy);
            out.push((sx + cx, sy + cy));
        }
    }
    Ok(out)
}

/// Draws every parameter independently and uniformly from its range.
///
/// Exactly seven uniforms are consumed per call, whatever the ranges, so
/// sample streams stay aligned across transform sets.
pub fn sample_transform<R: Rng + ?Sized>(set: &TransformSet, rng: &mut R) -> TransformSample {
    let mut draw = |range: f64| {
        let u: f64 = rng.gen();
        if range == 0.0 {
            0.0
        } else {
            range * (2.0 * u - 1.0)
        }
    };
    let theta_deg = draw(set.rotation_deg);
    let tx = draw(set.translate_x);
    let ty = draw(set.translate_y);
    let scale_p = draw(set.scale_pct);
    let shear_m = draw(set.shear_pct);
    let contrast = draw(set.contrast_pct);
    let brightness_beta = draw(set.brightness_abs);
    TransformSample {
        theta_deg,
        tx,
        ty,
        scale_p,
        shear_m,
        contrast_alpha: 1.0 + contrast / 100.0,
        brightness_beta,
    }
}

pub fn sample_transforms<R: Rng + ?Sized>(set: &TransformSet, n: usize, rng: &mut R) -> Vec<TransformSample> {
    (0..n).map(|_| sample_transform(set, rng)).collect()
}

/// Shape helper for single-channel test images.
pub fn plane_shape(height: usize, width: usize) -> Shape {
    Shape::new(height, width, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identity_matrix() {
        let m = affine_matrix(&TransformSample::identity()).unwrap();
        assert_eq!(m, AugmentedMatrix::IDENTITY);
    }

    #[test]
    fn quarter_turn() {
        let m = affine_matrix(&TransformSample::rotation(90.0)).unwrap();
        assert!(close(m.a11, 0.0, 1e-15) && close(m.a22, 0.0, 1e-15));
        assert!(close(m.a12, -1.0, 1e-15) && close(m.a21, 1.0, 1e-15));
        assert_eq!((m.b1, m.b2), (0.0, 0.0));
    }

    #[test]
    fn rotation_then_scale_composes_by_hand() {
        let s = TransformSample {
            theta_deg: 30.0,
            scale_p: 20.0,
            ..TransformSample::identity()
        };
        let m = affine_matrix(&s).unwrap();
        let (c, sn) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        // (c -s; s c) * diag(1.2, 1.2)
        assert!(close(m.a11, 1.2 * c, 1e-12));
        assert!(close(m.a12, -1.2 * sn, 1e-12));
        assert!(close(m.a21, 1.2 * sn, 1e-12));
        assert!(close(m.a22, 1.2 * c, 1e-12));
    }

    #[test]
    fn singular_sample_is_rejected() {
        let s = TransformSample {
            scale_p: -100.0,
            ..TransformSample::identity()
        };
        assert!(matches!(affine_matrix(&s), Err(Error::SingularTransform { .. })));
        let img = ImageTensor::zeros(plane_shape(4, 4));
        assert!(apply_transform(&img, &s).is_err());
    }

    #[test]
    fn identity_warp_is_bitwise() {
        let data: Vec<f64> = (0..48).map(|i| (i as f64 * 0.37).sin()).collect();
        let img = ImageTensor::new(4, 4, 3, data).unwrap();
        let out = apply_transform(&img, &TransformSample::identity()).unwrap();
        assert_eq!(out, img);
        let g = transform_input_grad(&img, &TransformSample::identity()).unwrap();
        assert_eq!(g, img);
    }

    #[test]
    fn brightness_on_constant_image() {
        let img = ImageTensor::filled(plane_shape(3, 3), 0.5);
        let out = apply_transform(&img, &TransformSample::photometric(1.0, 0.1)).unwrap();
        assert!(out.data().iter().all(|&v| close(v, 0.6, 1e-15)));
    }

    #[test]
    fn unit_translation_moves_one_column() {
        let mut img = ImageTensor::zeros(plane_shape(4, 4));
        let i = img.index(0, 2, 2);
        img.data_mut()[i] = 1.0;
        let out = apply_transform(&img, &TransformSample::translation(1.0, 0.0)).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let want = if (r, c) == (2, 3) { 1.0 } else { 0.0 };
                assert_eq!(out.at(0, r, c), want, "pixel ({r},{c})");
            }
        }
    }

    #[test]
    fn contrast_gradient_is_gain() {
        let up = ImageTensor::filled(plane_shape(5, 5), 1.0);
        let g = transform_input_grad(&up, &TransformSample::photometric(1.2, 0.3)).unwrap();
        assert!(g.data().iter().all(|&v| close(v, 1.2, 1e-15)));
    }

    #[test]
    fn grad_rejects_mismatched_singular() {
        let up = ImageTensor::zeros(plane_shape(2, 2));
        let bad = TransformSample {
            contrast_alpha: 0.0,
            ..TransformSample::identity()
        };
        assert!(transform_input_grad(&up, &bad).is_err());
    }

    #[test]
    fn zero_ranges_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert_eq!(
                sample_transform(&TransformSet::identity(), &mut rng),
                TransformSample::identity()
            );
        }
    }

    #[test]
    fn uniform_rotation_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let set = TransformSet::rotation(20.0);
        let thetas: Vec<f64> = (0..10_000)
            .map(|_| sample_transform(&set, &mut rng).theta_deg)
            .collect();
        let min = thetas.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = thetas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = thetas.iter().sum::<f64>() / thetas.len() as f64;
        assert!((-20.0..=-19.0).contains(&min), "min {min}");
        assert!((19.0..=20.0).contains(&max), "max {max}");
        assert!(mean.abs() <= 0.6, "mean {mean}");
    }

    #[test]
    fn samples_stay_in_range_and_repeat() {
        let set: TransformSet = "R(10), T(2,2), Sh(2), Sc(2), B(2, 0.001)".parse().unwrap();
        let a = sample_transforms(&set, 200, &mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_transforms(&set, 200, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        assert!(a.iter().all(|s| set.contains(s)));
    }

    #[test]
    fn notation_round_trip() {
        let set: TransformSet = "R(10), T(2,2), Sh(2), Sc(2), B(2, 0.001)".parse().unwrap();
        assert_eq!(set.rotation_deg, 10.0);
        assert_eq!((set.translate_x, set.translate_y), (2.0, 2.0));
        assert_eq!(set.shear_pct, 2.0);
        assert_eq!(set.scale_pct, 2.0);
        assert_eq!((set.contrast_pct, set.brightness_abs), (2.0, 0.001));
        assert_eq!(set.to_string(), "R(10), T(2, 2), Sh(2), Sc(2), B(2, 0.001)");
        assert_eq!(set.to_string().parse::<TransformSet>().unwrap(), set);
        assert_eq!("none".parse::<TransformSet>().unwrap(), TransformSet::identity());
    }

    #[test]
    fn notation_errors() {
        for bad in ["R(10", "Q(1)", "R(1, 2)", "R(10) R(5)", "R(10), R(5)", "Sc(150)", "R(-3)", "R(x)"] {
            assert!(bad.parse::<TransformSet>().is_err(), "{bad}");
        }
    }

    #[test]
    fn coordinate_grad_matches_differences() {
        let data: Vec<f64> = (0..36).map(|i| ((i * 7 % 11) as f64) / 10.0).collect();
        let img = ImageTensor::new(6, 6, 1, data).unwrap();
        let h = 1e-6;
        for &(x, y) in &[(1.3, 2.6), (3.71, 0.45), (4.2, 4.9), (-0.4, 2.2)] {
            let (dx, dy) = bilinear_coordinate_grad(&img, 0, x, y);
            let nx = (bilinear_sample(&img, 0, x + h, y) - bilinear_sample(&img, 0, x - h, y)) / (2.0 * h);
            let ny = (bilinear_sample(&img, 0, x, y + h) - bilinear_sample(&img, 0, x, y - h)) / (2.0 * h);
            assert!(close(dx, nx, 1e-8), "dx {dx} vs {nx}");
            assert!(close(dy, ny, 1e-8), "dy {dy} vs {ny}");
        }
    }
}
