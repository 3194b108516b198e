//! Hyperspectral nonlinearity mapping.
//!
//! A scene whose pixels follow the linear mixing model (LMM) lies, after
//! mean centering, in a `p = R - 1` dimensional subspace spanned by
//! differences of the `R` endmember spectra. Bilinear interaction terms
//! push pixels out of that subspace, so the distance between a locally
//! estimated subspace and the global one quantifies the nonlinearity at
//! each pixel.
//!
//! The pipeline: generate (or load) a cube, fit the global basis `Ubar` by
//! PCA, then for every pixel form the matrix of the pixel and its `K - 1`
//! nearest spectral neighbors, compute the regularized local subspace
//! estimate — the top-`p` eigenvectors of `η Ubar Ubarᵀ + Yₗ Yₗᵀ` with
//! `η = 2 σ_n² κ` balancing prior and data — and record
//! `d²(Ûₗ, Ubar)`. `η = 0` degenerates to a plain local SVD.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{squared_distance, top_p_eigvecs, OrthonormalBasis};

/// An image of `L = width x height` pixels by `N` spectral bands,
/// pixel-major (`pixels[(l, band)]`).
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    pixels: DMatrix<f64>,
    width: usize,
    height: usize,
}

impl HyperCube {
    pub fn new(pixels: DMatrix<f64>, width: usize, height: usize) -> Result<Self> {
        if width * height != pixels.nrows() {
            return Err(Error::shape(format!(
                "width {width} x height {height} != {} pixels",
                pixels.nrows()
            )));
        }
        if pixels.ncols() == 0 {
            return Err(Error::shape("cube needs at least one band"));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("cube contains non-finite entries"));
        }
        Ok(Self { pixels, width, height })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_pixels(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn bands(&self) -> usize {
        self.pixels.ncols()
    }

    /// Pixel-major `L x N` matrix of spectra.
    pub fn pixels(&self) -> &DMatrix<f64> {
        &self.pixels
    }

    pub fn pixel(&self, l: usize) -> DVector<f64> {
        self.pixels.row(l).transpose()
    }

    /// Mean spectrum over all pixels.
    pub fn mean_spectrum(&self) -> DVector<f64> {
        let l = self.num_pixels() as f64;
        self.pixels.row_sum().transpose() / l
    }
}

/// `R` nonnegative endmember spectra, one per column.
#[derive(Debug, Clone)]
pub struct EndmemberSet {
    spectra: DMatrix<f64>,
}

impl EndmemberSet {
    pub fn new(spectra: DMatrix<f64>) -> Result<Self> {
        if spectra.ncols() < 1 {
            return Err(Error::arg("need at least one endmember"));
        }
        if spectra.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::arg(
                "endmember spectra must be finite and nonnegative",
            ));
        }
        Ok(Self { spectra })
    }

    pub fn bands(&self) -> usize {
        self.spectra.nrows()
    }

    pub fn count(&self) -> usize {
        self.spectra.ncols()
    }

    pub fn spectra(&self) -> &DMatrix<f64> {
        &self.spectra
    }

    /// Three smooth synthetic spectra over `bands` samples of `t ∈ [0, 1]`:
    /// two Gaussian bumps `0.2 + 0.6 exp(-(t-c)²/w)` centered at 0.25 and
    /// 0.70, and the sinusoid `0.45 + 0.35 sin(2.5πt + 0.3)`. All values
    /// stay inside `[0, 1]`.
    pub fn synthetic_three(bands: usize) -> Result<Self> {
        if bands < 2 {
            return Err(Error::arg("need at least two bands"));
        }
        let mut m = DMatrix::zeros(bands, 3);
        for i in 0..bands {
            let t = i as f64 / (bands - 1) as f64;
            m[(i, 0)] = 0.2 + 0.6 * (-(t - 0.25).powi(2) / 0.02).exp();
            m[(i, 1)] = 0.2 + 0.6 * (-(t - 0.70).powi(2) / 0.03).exp();
            m[(i, 2)] = 0.45 + 0.35 * (2.5 * std::f64::consts::PI * t + 0.3).sin();
        }
        Self::new(m)
    }
}

/// `L x R` abundances, each row nonnegative and summing to one.
#[derive(Debug, Clone)]
pub struct AbundanceField {
    data: DMatrix<f64>,
}

impl AbundanceField {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        for l in 0..data.nrows() {
            let mut sum = 0.0;
            for r in 0..data.ncols() {
                let v = data[(l, r)];
                if !(v >= 0.0) {
                    return Err(Error::arg(format!(
                        "abundance ({l}, {r}) = {v} is negative"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::arg(format!(
                    "abundance row {l} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { data })
    }

    pub fn pixels(&self) -> usize {
        self.data.nrows()
    }

    pub fn endmembers(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// Rows i.i.d. uniform on the probability simplex, by normalized
/// exponential spacings.
pub fn sample_simplex_abundances(
    r: usize,
    l: usize,
    rng: &mut impl Rng,
) -> Result<AbundanceField> {
    if r < 1 || l < 1 {
        return Err(Error::arg("need r >= 1 endmembers and l >= 1 pixels"));
    }
    let mut data = DMatrix::zeros(l, r);
    for row in 0..l {
        let mut sum = 0.0;
        for col in 0..r {
            let e = -(rng.random::<f64>().max(f64::MIN_POSITIVE)).ln();
            data[(row, col)] = e;
            sum += e;
        }
        for col in 0..r {
            data[(row, col)] /= sum;
        }
        // Exact renormalization so the row-sum invariant holds bit-for-bit.
        for _ in 0..8 {
            let s: f64 = (0..r).map(|c| data[(row, c)]).sum();
            if s == 1.0 {
                break;
            }
            data[(row, r - 1)] += 1.0 - s;
        }
    }
    AbundanceField::new(data)
}

/// Per-pixel bilinear interaction coefficients `γ_{i,j} ∈ [0, 1]` for the
/// unordered endmember pairs `i < j`, pair-major `(0,1), (0,2), …, (1,2), …`.
#[derive(Debug, Clone)]
pub struct GammaCoeffs {
    data: DMatrix<f64>,
    endmembers: usize,
}

impl GammaCoeffs {
    pub fn pair_count(r: usize) -> usize {
        r * (r - 1) / 2
    }

    /// Index of the pair `(i, j)` with `i < j` in pair-major order.
    pub fn pair_index(r: usize, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < r);
        i * r - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn zeros(r: usize, l: usize) -> Self {
        Self {
            data: DMatrix::zeros(l, Self::pair_count(r)),
            endmembers: r,
        }
    }

    pub fn new(data: DMatrix<f64>, endmembers: usize) -> Result<Self> {
        if data.ncols() != Self::pair_count(endmembers) {
            return Err(Error::shape(format!(
                "{} columns for {} endmembers, expected {}",
                data.ncols(),
                endmembers,
                Self::pair_count(endmembers)
            )));
        }
        if data.iter().any(|v| !(*v >= 0.0 && *v <= 1.0)) {
            return Err(Error::arg(
                "interaction coefficients must lie in [0, 1]",
            ));
        }
        Ok(Self { data, endmembers })
    }

    pub fn get(&self, l: usize, i: usize, j: usize) -> f64 {
        self.data[(l, Self::pair_index(self.endmembers, i, j))]
    }

    pub fn set(&mut self, l: usize, i: usize, j: usize, v: f64) {
        let idx = Self::pair_index(self.endmembers, i, j);
        self.data[(l, idx)] = v;
    }
}

/// Generates a cube from the bilinear mixing model:
/// linear term `Σ_r a_r m_r` plus `Σ_{i<j} γ_{ij} a_i a_j (m_i ⊙ m_j)` per
/// pixel, plus optional white Gaussian noise.
///
/// All-zero γ reproduces the plain linear mixture exactly; all-one γ gives
/// the fully bilinear model.
pub fn generate_gbm_image(
    em: &EndmemberSet,
    ab: &AbundanceField,
    gamma: &GammaCoeffs,
    noise_sigma2: f64,
    width: usize,
    height: usize,
    rng: &mut impl Rng,
) -> Result<HyperCube> {
    let (n, r, l) = (em.bands(), em.count(), ab.pixels());
    if ab.endmembers() != r {
        return Err(Error::shape(format!(
            "abundances have {} endmembers, spectra have {r}",
            ab.endmembers()
        )));
    }
    if gamma.endmembers != r || gamma.data.nrows() != l {
        return Err(Error::shape(
            "interaction coefficients do not match the abundance field",
        ));
    }
    if !(noise_sigma2 >= 0.0) {
        return Err(Error::arg("noise variance must be >= 0"));
    }
    // Precompute the Hadamard products of endmember pairs.
    let n_pairs = GammaCoeffs::pair_count(r);
    let mut hadamard = DMatrix::zeros(n, n_pairs);
    for i in 0..r {
        for j in (i + 1)..r {
            let idx = GammaCoeffs::pair_index(r, i, j);
            for band in 0..n {
                hadamard[(band, idx)] = em.spectra()[(band, i)] * em.spectra()[(band, j)];
            }
        }
    }
    let mut pixels = DMatrix::zeros(l, n);
    for pix in 0..l {
        for band in 0..n {
            let mut v = 0.0;
            for rr in 0..r {
                v += ab.data()[(pix, rr)] * em.spectra()[(band, rr)];
            }
            for i in 0..r {
                for j in (i + 1)..r {
                    let g = gamma.get(pix, i, j);
                    if g != 0.0 {
                        v += g
                            * ab.data()[(pix, i)]
                            * ab.data()[(pix, j)]
                            * hadamard[(band, GammaCoeffs::pair_index(r, i, j))];
                    }
                }
            }
            pixels[(pix, band)] = v;
        }
    }
    if noise_sigma2 > 0.0 {
        let sigma = noise_sigma2.sqrt();
        for pix in 0..l {
            for band in 0..n {
                let z: f64 = StandardNormal.sample(rng);
                pixels[(pix, band)] += sigma * z;
            }
        }
    }
    HyperCube::new(pixels, width, height)
}

/// Ground-truth interaction map for the synthetic scene: the upper-left
/// quadrant carries `γ = min(1, dist-to-image-center / quadrant diagonal)`,
/// rising from 0 at the image center to 1 at the upper-left corner; the
/// remaining three quarters of the image are 0.
pub fn synthetic_gamma_map(width: usize, height: usize) -> Result<Vec<f64>> {
    if width < 2 || height < 2 || width % 2 != 0 || height % 2 != 0 {
        return Err(Error::arg(format!(
            "width and height must be even and >= 2, got {width} x {height}"
        )));
    }
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let diag = (cx * cx + cy * cy).sqrt();
    let mut map = vec![0.0; width * height];
    for row in 0..height / 2 {
        for col in 0..width / 2 {
            let dx = col as f64 - cx;
            let dy = row as f64 - cy;
            let g = ((dx * dx + dy * dy).sqrt() / diag).min(1.0);
            map[row * width + col] = g;
        }
    }
    Ok(map)
}

/// Top-`p` eigenvectors of the mean-centered sample covariance of the cube;
/// the global nominal basis `Ubar`.
pub fn global_pca_basis(cube: &HyperCube, p: usize) -> Result<OrthonormalBasis> {
    let (l, n) = (cube.num_pixels(), cube.bands());
    if p < 1 || p > n.min(l) {
        return Err(Error::arg(format!(
            "p must satisfy 1 <= p <= min(L, N) = {}, got {p}",
            n.min(l)
        )));
    }
    let mean = cube.mean_spectrum();
    let mut centered = cube.pixels().clone();
    for row in 0..l {
        for band in 0..n {
            centered[(row, band)] -= mean[band];
        }
    }
    let cov = centered.transpose() * centered / (l as f64 - 1.0).max(1.0);
    top_p_eigvecs(&cov, p)
}

/// Noise-power plug-in estimate: mean of the trailing `N - p` eigenvalues
/// of the centered sample covariance.
pub fn plugin_noise_variance(cube: &HyperCube, p: usize) -> Result<f64> {
    let (l, n) = (cube.num_pixels(), cube.bands());
    if p >= n {
        return Err(Error::arg(format!(
            "noise plug-in needs p < N, got p={p}, N={n}"
        )));
    }
    let mean = cube.mean_spectrum();
    let mut centered = cube.pixels().clone();
    for row in 0..l {
        for band in 0..n {
            centered[(row, band)] -= mean[band];
        }
    }
    let cov = centered.transpose() * centered / (l as f64 - 1.0).max(1.0);
    let dec = crate::geometry::spectral_decomposition(&cov)?;
    let trailing: f64 = dec.values.iter().skip(p).sum();
    Ok((trailing / (n - p) as f64).max(0.0))
}

/// Indices of the `k - 1` nearest spectral neighbors of pixel `ell`
/// (Euclidean distance, excluding the pixel itself, ties broken by
/// ascending index).
pub fn knn_neighbors(cube: &HyperCube, ell: usize, k: usize) -> Result<Vec<usize>> {
    let l = cube.num_pixels();
    if ell >= l {
        return Err(Error::arg(format!("pixel {ell} out of range (L={l})")));
    }
    if k < 2 || k - 1 >= l {
        return Err(Error::arg(format!(
            "need 2 <= k and k-1 < L, got k={k}, L={l}"
        )));
    }
    let target = cube.pixels().row(ell);
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(l - 1);
    for other in 0..l {
        if other == ell {
            continue;
        }
        let mut d2 = 0.0;
        let row = cube.pixels().row(other);
        for band in 0..cube.bands() {
            let diff = row[band] - target[band];
            d2 += diff * diff;
        }
        dist.push((d2, other));
    }
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(dist.iter().take(k - 1).map(|&(_, i)| i).collect())
}

/// Per-pixel squared distances between local subspace estimates and the
/// global basis, arranged row-major on the image grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonlinearityMap {
    pub values: Vec<f64>,
    pub width: usize,
    pub height: usize,
    pub eta: f64,
    pub k_neighbors: usize,
}

impl NonlinearityMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// CSV grid with a header row naming the columns.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.width).map(|c| format!("c{c}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in 0..self.height {
            let cells: Vec<String> = (0..self.width)
                .map(|col| format!("{}", self.get(row, col)))
                .collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Mean over the upper-left quadrant and over the remaining pixels.
    pub fn region_means(&self) -> (f64, f64) {
        let (mut quad_sum, mut quad_n) = (0.0, 0usize);
        let (mut rest_sum, mut rest_n) = (0.0, 0usize);
        for row in 0..self.height {
            for col in 0..self.width {
                let v = self.get(row, col);
                if row < self.height / 2 && col < self.width / 2 {
                    quad_sum += v;
                    quad_n += 1;
                } else {
                    rest_sum += v;
                    rest_n += 1;
                }
            }
        }
        (quad_sum / quad_n.max(1) as f64, rest_sum / rest_n.max(1) as f64)
    }
}

/// Computes the nonlinearity map for the whole cube.
///
/// Every pixel is centered by the global mean (the same centering the PCA
/// basis uses), gathered with its `k - 1` nearest neighbors into `Yₗ`, and
/// scored by `d²` between `Ubar` and the top-`p` eigenvectors of
/// `η Ubar Ubarᵀ + Yₗ Yₗᵀ`. The estimate depends on the prior weight only
/// through `η = 2σ_n²κ`, so no separate noise power is needed here.
pub fn local_mmsd_map(
    cube: &HyperCube,
    ubar: &OrthonormalBasis,
    eta: f64,
    k: usize,
) -> Result<NonlinearityMap> {
    if !(eta >= 0.0) {
        return Err(Error::arg(format!("eta must be >= 0, got {eta}")));
    }
    if ubar.n() != cube.bands() {
        return Err(Error::shape(format!(
            "basis ambient dimension {} != band count {}",
            ubar.n(),
            cube.bands()
        )));
    }
    let l = cube.num_pixels();
    if k < 2 || k - 1 >= l {
        return Err(Error::arg(format!(
            "need 2 <= k and k-1 < L, got k={k}, L={l}"
        )));
    }
    let mean = cube.mean_spectrum();
    let prior = ubar.projector() * eta;
    let values: Vec<f64> = (0..l)
        .into_par_iter()
        .map(|ell| -> Result<f64> {
            let neighbors = knn_neighbors(cube, ell, k)?;
            let n = cube.bands();
            let mut y = DMatrix::zeros(n, k);
            for (slot, &idx) in std::iter::once(&ell).chain(neighbors.iter()).enumerate() {
                for band in 0..n {
                    y[(band, slot)] = cube.pixels()[(idx, band)] - mean[band];
                }
            }
            let m = &prior + &y * y.transpose();
            let local = top_p_eigvecs(&m, ubar.p())?;
            squared_distance(&local, ubar)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NonlinearityMap {
        values,
        width: cube.width(),
        height: cube.height(),
        eta,
        k_neighbors: k,
    })
}

/// JSON sidecar describing a raw cube file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct CubeSidecar {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub dtype: String,
    pub layout: String,
}

impl CubeSidecar {
    pub fn for_cube(cube: &HyperCube) -> Self {
        Self {
            width: cube.width(),
            height: cube.height(),
            bands: cube.bands(),
            dtype: "f64le".to_string(),
            layout: "pixel-major".to_string(),
        }
    }
}

/// Writes a cube as raw little-endian f64, pixel-major, plus a JSON sidecar.
pub fn write_cube(cube: &HyperCube, data_path: &Path, sidecar_path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(data_path)?);
    for pix in 0..cube.num_pixels() {
        for band in 0..cube.bands() {
            file.write_all(&cube.pixels()[(pix, band)].to_le_bytes())?;
        }
    }
    file.flush()?;
    let sidecar = CubeSidecar::for_cube(cube);
    std::fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

fn sidecar_field_usize(value: &serde_json::Value, field: &str) -> Result<usize> {
    value
        .get(field)
        .ok_or_else(|| Error::format(field, "missing"))?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| Error::format(field, "expected a nonnegative integer"))
}

fn sidecar_field_str<'v>(value: &'v serde_json::Value, field: &str) -> Result<&'v str> {
    value
        .get(field)
        .ok_or_else(|| Error::format(field, "missing"))?
        .as_str()
        .ok_or_else(|| Error::format(field, "expected a string"))
}

/// Reads a cube written by [`write_cube`], validating the sidecar fields
/// and the payload size.
pub fn read_cube(data_path: &Path, sidecar_path: &Path) -> Result<HyperCube> {
    let raw = std::fs::read_to_string(sidecar_path)?;
    let value: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| Error::format("sidecar", format!("invalid JSON: {e}")))?;
    let width = sidecar_field_usize(&value, "width")?;
    let height = sidecar_field_usize(&value, "height")?;
    let bands = sidecar_field_usize(&value, "bands")?;
    let dtype = sidecar_field_str(&value, "dtype")?;
    if dtype != "f64le" {
        return Err(Error::format("dtype", format!("unsupported `{dtype}`")));
    }
    let layout = sidecar_field_str(&value, "layout")?;
    if layout != "pixel-major" {
        return Err(Error::format("layout", format!("unsupported `{layout}`")));
    }
    let expected = width * height * bands * 8;
    let mut file = std::fs::File::open(data_path)?;
    let mut bytes = Vec::with_capacity(expected);
    file.read_to_end(&mut bytes)?;
    if bytes.len() != expected {
        return Err(Error::format(
            "data",
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let l = width * height;
    let mut pixels = DMatrix::zeros(l, bands);
    for pix in 0..l {
        for band in 0..bands {
            let off = (pix * bands + band) * 8;
            let mut buf = [0u8; 8];
            buf.copy_from_slice(&bytes[off..off + 8]);
            pixels[(pix, band)] = f64::from_le_bytes(buf);
        }
    }
    HyperCube::new(pixels, width, height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from_seed;

    #[test]
    fn simplex_rows_sum_to_one() {
        let mut rng = rng_from_seed(1);
        let ab = sample_simplex_abundances(3, 200, &mut rng).unwrap();
        for l in 0..200 {
            let sum: f64 = (0..3).map(|r| ab.data()[(l, r)]).sum();
            assert_eq!(sum, 1.0);
        }
    }

    #[test]
    fn simplex_single_endmember_is_degenerate() {
        let mut rng = rng_from_seed(2);
        let ab = sample_simplex_abundances(1, 5, &mut rng).unwrap();
        for l in 0..5 {
            assert_eq!(ab.data()[(l, 0)], 1.0);
        }
    }

    #[test]
    fn simplex_components_have_symmetric_means() {
        let mut rng = rng_from_seed(3);
        let l = 100_000;
        let ab = sample_simplex_abundances(4, l, &mut rng).unwrap();
        for r in 0..4 {
            let mean: f64 = (0..l).map(|i| ab.data()[(i, r)]).sum::<f64>() / l as f64;
            assert!((mean - 0.25).abs() < 0.01, "component {r} mean {mean}");
        }
    }

    #[test]
    fn gamma_pair_indexing_is_lexicographic() {
        assert_eq!(GammaCoeffs::pair_index(3, 0, 1), 0);
        assert_eq!(GammaCoeffs::pair_index(3, 0, 2), 1);
        assert_eq!(GammaCoeffs::pair_index(3, 1, 2), 2);
        assert_eq!(GammaCoeffs::pair_count(3), 3);
        assert_eq!(GammaCoeffs::pair_count(1), 0);
    }

    #[test]
    fn gbm_zero_gamma_is_exactly_linear() {
        let mut rng = rng_from_seed(4);
        let em = EndmemberSet::synthetic_three(16).unwrap();
        let ab = sample_simplex_abundances(3, 12, &mut rng).unwrap();
        let gamma = GammaCoeffs::zeros(3, 12);
        let cube = generate_gbm_image(&em, &ab, &gamma, 0.0, 4, 3, &mut rng).unwrap();
        let linear = ab.data() * em.spectra().transpose();
        assert_eq!(cube.pixels(), &linear);
    }

    #[test]
    fn gbm_single_endmember_returns_that_spectrum() {
        let mut rng = rng_from_seed(5);
        let em = EndmemberSet::new(DMatrix::from_column_slice(3, 1, &[0.4, 0.5, 0.6])).unwrap();
        let ab = sample_simplex_abundances(1, 4, &mut rng).unwrap();
        let gamma = GammaCoeffs::zeros(1, 4);
        let cube = generate_gbm_image(&em, &ab, &gamma, 0.0, 2, 2, &mut rng).unwrap();
        for pix in 0..4 {
            for band in 0..3 {
                assert_eq!(cube.pixels()[(pix, band)], em.spectra()[(band, 0)]);
            }
        }
    }

    #[test]
    fn gamma_map_shape_and_range() {
        let (w, h) = (50, 50);
        let map = synthetic_gamma_map(w, h).unwrap();
        let zeros = map.iter().filter(|&&g| g == 0.0).count();
        assert!(zeros >= 3 * w * h / 4, "{zeros} zero pixels");
        assert!(map.iter().all(|&g| (0.0..=1.0).contains(&g)));
        // Image-center pixel is outside the quadrant, hence zero.
        assert_eq!(map[(h / 2) * w + w / 2], 0.0);
        // Upper-left corner reaches the full interaction strength.
        assert_eq!(map[0], 1.0);
    }

    #[test]
    fn pca_basis_captures_noiseless_mixture() {
        let mut rng = rng_from_seed(6);
        let em = EndmemberSet::synthetic_three(12).unwrap();
        let ab = sample_simplex_abundances(3, 64, &mut rng).unwrap();
        let gamma = GammaCoeffs::zeros(3, 64);
        let cube = generate_gbm_image(&em, &ab, &gamma, 0.0, 8, 8, &mut rng).unwrap();
        let basis = global_pca_basis(&cube, 2).unwrap();
        let mean = cube.mean_spectrum();
        for pix in 0..cube.num_pixels() {
            let centered = cube.pixel(pix) - &mean;
            let resid = &centered - basis.matrix() * (basis.matrix().transpose() * &centered);
            assert!(resid.norm() < 1e-8, "pixel {pix} residual {}", resid.norm());
        }
    }

    #[test]
    fn pca_basis_is_duplicate_invariant() {
        let mut rng = rng_from_seed(7);
        let em = EndmemberSet::synthetic_three(10).unwrap();
        let ab = sample_simplex_abundances(3, 16, &mut rng).unwrap();
        let gamma = GammaCoeffs::zeros(3, 16);
        let cube = generate_gbm_image(&em, &ab, &gamma, 0.0, 4, 4, &mut rng).unwrap();
        let mut doubled = DMatrix::zeros(32, 10);
        for i in 0..16 {
            for b in 0..10 {
                doubled[(i, b)] = cube.pixels()[(i, b)];
                doubled[(16 + i, b)] = cube.pixels()[(i, b)];
            }
        }
        let cube2 = HyperCube::new(doubled, 4, 8).unwrap();
        let b1 = global_pca_basis(&cube, 2).unwrap();
        let b2 = global_pca_basis(&cube2, 2).unwrap();
        assert!(squared_distance(&b1, &b2).unwrap() < 1e-16);
    }

    #[test]
    fn knn_finds_duplicate_first() {
        let mut px = DMatrix::zeros(4, 2);
        px[(0, 0)] = 1.0;
        px[(1, 0)] = 5.0;
        px[(2, 0)] = 1.0; // duplicate of pixel 0
        px[(3, 0)] = -2.0;
        let cube = HyperCube::new(px, 2, 2).unwrap();
        let nn = knn_neighbors(&cube, 0, 2).unwrap();
        assert_eq!(nn, vec![2]);
    }

    #[test]
    fn knn_matches_brute_force() {
        let mut rng = rng_from_seed(8);
        let px = DMatrix::from_fn(30, 5, |_, _| rng.random::<f64>());
        let cube = HyperCube::new(px, 6, 5).unwrap();
        for ell in [0usize, 7, 29] {
            let got = knn_neighbors(&cube, ell, 4).unwrap();
            let mut all: Vec<(f64, usize)> = (0..30)
                .filter(|&i| i != ell)
                .map(|i| {
                    let d = (cube.pixel(i) - cube.pixel(ell)).norm_squared();
                    (d, i)
                })
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let expect: Vec<usize> = all.iter().take(3).map(|&(_, i)| i).collect();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn map_collapses_under_dominant_prior() {
        let mut rng = rng_from_seed(9);
        let em = EndmemberSet::synthetic_three(10).unwrap();
        let ab = sample_simplex_abundances(3, 36, &mut rng).unwrap();
        let mut gamma = GammaCoeffs::zeros(3, 36);
        for l in 0..18 {
            gamma.set(l, 0, 1, 0.8);
        }
        let cube = generate_gbm_image(&em, &ab, &gamma, 1e-4, 6, 6, &mut rng).unwrap();
        let ubar = global_pca_basis(&cube, 2).unwrap();
        let map = local_mmsd_map(&cube, &ubar, 1e6, 4).unwrap();
        assert!(map.values.iter().all(|&v| v < 1e-3), "prior did not dominate");
    }

    #[test]
    fn map_shrinks_with_prior_strength() {
        let mut rng = rng_from_seed(10);
        let em = EndmemberSet::synthetic_three(10).unwrap();
        let ab = sample_simplex_abundances(3, 36, &mut rng).unwrap();
        let gamma = GammaCoeffs::zeros(3, 36);
        let cube = generate_gbm_image(&em, &ab, &gamma, 1e-3, 6, 6, &mut rng).unwrap();
        let ubar = global_pca_basis(&cube, 2).unwrap();
        let soft = local_mmsd_map(&cube, &ubar, 0.5, 4).unwrap();
        let hard = local_mmsd_map(&cube, &ubar, 1e6, 4).unwrap();
        for (s, h) in soft.values.iter().zip(&hard.values) {
            assert!(h <= &(s + 1e-9));
        }
    }

    #[test]
    fn cube_io_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rng_from_seed(11);
        let px = DMatrix::from_fn(12, 4, |_, _| rng.random::<f64>());
        let cube = HyperCube::new(px, 4, 3).unwrap();
        let data = dir.path().join("cube.f64le");
        let sidecar = dir.path().join("cube.json");
        write_cube(&cube, &data, &sidecar).unwrap();
        let back = read_cube(&data, &sidecar).unwrap();
        assert_eq!(cube, back);
    }

    #[test]
    fn cube_reader_names_offending_field() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("cube.f64le");
        let sidecar = dir.path().join("cube.json");
        std::fs::write(&data, [0u8; 32]).unwrap();
        std::fs::write(&sidecar, r#"{"width": 2, "height": 1, "dtype": "f64le", "layout": "pixel-major"}"#).unwrap();
        match read_cube(&data, &sidecar) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "bands"),
            other => panic!("expected format error, got {other:?}"),
        }
        std::fs::write(&sidecar, r#"{"width": 2, "height": 1, "bands": 3, "dtype": "f64le", "layout": "pixel-major"}"#).unwrap();
        match read_cube(&data, &sidecar) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "data"),
            other => panic!("expected size mismatch, got {other:?}"),
        }
    }
}
