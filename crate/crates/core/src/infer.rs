//! Bayesian two-group comparison with a student-t likelihood (BEST).
//!
//! Each group gets its own location and scale, and both share one normality
//! parameter. Priors are uniform over ranges set from the pooled data. The
//! posterior is sampled by component-wise random-walk Metropolis.

use rand::Rng;
use rand_distr::{Distribution, StudentT};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::leaves::stream_rng;
use crate::quality::{fpa_simulate, kept_count, psnr};
use crate::raster::ImageGrid;

pub const PARAMETERS: [&str; 5] = ["mu1", "sigma1", "mu2", "sigma2", "nu"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentTParams {
    pub mu: f64,
    pub sigma: f64,
    pub nu: f64,
}

impl StudentTParams {
    pub fn new(mu: f64, sigma: f64, nu: f64) -> Result<Self> {
        if !(sigma > 0.0) || !(nu >= 1.0) || !mu.is_finite() {
            return Err(domain(format!("invalid student-t parameters mu={mu} sigma={sigma} nu={nu}")));
        }
        Ok(Self { mu, sigma, nu })
    }
}

pub fn student_t_log_density(y: f64, p: StudentTParams) -> Result<f64> {
    let p = StudentTParams::new(p.mu, p.sigma, p.nu)?;
    Ok(log_norm(p.nu) - p.sigma.ln() + kernel(y, p.mu, p.sigma, p.nu))
}

/// `ln Γ((ν+1)/2) - ln Γ(ν/2) - ln(νπ)/2`.
fn log_norm(nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * std::f64::consts::PI).ln()
}

fn kernel(y: f64, mu: f64, sigma: f64, nu: f64) -> f64 {
    let z = (y - mu) / sigma;
    -0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
}

fn group_log_likelihood(data: &[f64], mu: f64, sigma: f64, nu: f64) -> f64 {
    let k: f64 = data.iter().map(|&y| kernel(y, mu, sigma, nu)).sum();
    k + data.len() as f64 * (log_norm(nu) - sigma.ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    pub chains: usize,
    /// Retained draws per chain.
    pub draws: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub r_hat_threshold: f64,
    /// Extra sampling rounds of `draws` each when R̂ has not yet dropped below the threshold.
    pub max_extensions: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { chains: 4, draws: 25_000, burn_in: 5_000, seed: 0, r_hat_threshold: 1.05, max_extensions: 2 }
    }
}

impl McmcConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.chains < 2 {
            return Err(Error::Config("at least two chains are needed for convergence checks".into()));
        }
        if self.draws < 4 {
            return Err(Error::Config("too few draws per chain".into()));
        }
        Ok(())
    }
}

/// Uniform prior box, derived from the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorBounds {
    pub mu: (f64, f64),
    pub sigma: (f64, f64),
    pub nu: (f64, f64),
}

impl PriorBounds {
    /// `mu ∈ [min - 3 sd, max + 3 sd]`, `sigma ∈ (0.01 sd, 100 sd]`, `nu ∈ [1, 200]`, with `sd` of the pooled data.
    pub fn from_data(group1: &[f64], group2: &[f64]) -> Result<Self> {
        let pooled: Vec<f64> = group1.iter().chain(group2).copied().collect();
        if pooled.iter().any(|v| !v.is_finite()) {
            return Err(domain("group data must be finite"));
        }
        let sd = sample_sd(&pooled);
        if !(sd > 0.0) {
            return Err(domain("pooled data has zero spread"));
        }
        let lo = pooled.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = pooled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { mu: (lo - 3.0 * sd, hi + 3.0 * sd), sigma: (0.01 * sd, 100.0 * sd), nu: (1.0, 200.0) })
    }

    fn contains(&self, s: &[f64; 5]) -> bool {
        let inside_mu = |v: f64| v >= self.mu.0 && v <= self.mu.1;
        let inside_sigma = |v: f64| v > self.sigma.0 && v <= self.sigma.1;
        inside_mu(s[0]) && inside_mu(s[2]) && inside_sigma(s[1]) && inside_sigma(s[3]) && s[4] >= self.nu.0 && s[4] <= self.nu.1
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

/// Posterior draws merged across chains, chain by chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub mu1: Vec<f64>,
    pub sigma1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub nu: Vec<f64>,
    pub chains: usize,
    pub draws_per_chain: usize,
    /// Metropolis acceptance rate per parameter after burn-in, in [`PARAMETERS`] order.
    pub acceptance: [f64; 5],
    /// Split-R̂ per parameter, in [`PARAMETERS`] order.
    pub r_hat: [f64; 5],
    pub converged: bool,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.mu1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu1.is_empty()
    }

    pub fn parameter(&self, index: usize) -> &[f64] {
        match index {
            0 => &self.mu1,
            1 => &self.sigma1,
            2 => &self.mu2,
            3 => &self.sigma2,
            _ => &self.nu,
        }
    }

    /// The same posterior with the group labels exchanged.
    pub fn swapped(&self) -> Self {
        let mut out = self.clone();
        std::mem::swap(&mut out.mu1, &mut out.mu2);
        std::mem::swap(&mut out.sigma1, &mut out.sigma2);
        out.acceptance.swap(0, 2);
        out.acceptance.swap(1, 3);
        out.r_hat.swap(0, 2);
        out.r_hat.swap(1, 3);
        out
    }

    pub fn max_r_hat(&self) -> f64 {
        self.r_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

struct Chain {
    state: [f64; 5],
    steps: [f64; 5],
    rng: rand_chacha::ChaCha8Rng,
    draws: Vec<[f64; 5]>,
    accepted: [usize; 5],
    proposals: usize,
}

struct Model<'a> {
    group1: &'a [f64],
    group2: &'a [f64],
    prior: PriorBounds,
}

impl Model<'_> {
    fn log_likelihood(&self, s: &[f64; 5]) -> f64 {
        group_log_likelihood(self.group1, s[0], s[1], s[4]) + group_log_likelihood(self.group2, s[2], s[3], s[4])
    }

    /// One sweep of single-component updates; returns which proposals were accepted.
    fn sweep(&self, chain: &mut Chain, current: &mut f64) -> [bool; 5] {
        let mut accepted = [false; 5];
        for k in 0..5 {
            let mut proposal = chain.state;
            let z: f64 = rand_distr::StandardNormal.sample(&mut chain.rng);
            proposal[k] += chain.steps[k] * z;
            if !self.prior.contains(&proposal) {
                continue;
            }
            // only the terms touched by component k change
            let (old, new) = match k {
                0 | 1 => (
                    group_log_likelihood(self.group1, chain.state[0], chain.state[1], chain.state[4]),
                    group_log_likelihood(self.group1, proposal[0], proposal[1], proposal[4]),
                ),
                2 | 3 => (
                    group_log_likelihood(self.group2, chain.state[2], chain.state[3], chain.state[4]),
                    group_log_likelihood(self.group2, proposal[2], proposal[3], proposal[4]),
                ),
                _ => (*current, self.log_likelihood(&proposal)),
            };
            let delta = new - old;
            if delta >= 0.0 || chain.rng.random::<f64>().ln() < delta {
                chain.state = proposal;
                *current += delta;
                accepted[k] = true;
            }
        }
        accepted
    }

    fn run_burn_in(&self, chain: &mut Chain, iterations: usize) {
        let mut current = self.log_likelihood(&chain.state);
        let mut window = [0usize; 5];
        for it in 1..=iterations {
            let acc = self.sweep(chain, &mut current);
            for k in 0..5 {
                window[k] += acc[k] as usize;
            }
            if it % 100 == 0 {
                // steer each component toward the one-dimensional optimum of 0.44
                for k in 0..5 {
                    let rate = window[k] as f64 / 100.0;
                    chain.steps[k] *= if rate > 0.44 { 1.2 } else { 1.0 / 1.2 };
                }
                window = [0; 5];
            }
        }
    }

    fn run_sampling(&self, chain: &mut Chain, iterations: usize) {
        let mut current = self.log_likelihood(&chain.state);
        for _ in 0..iterations {
            let acc = self.sweep(chain, &mut current);
            for k in 0..5 {
                chain.accepted[k] += acc[k] as usize;
            }
            chain.proposals += 1;
            chain.draws.push(chain.state);
        }
    }
}

/// Samples the BEST posterior for two groups of observations.
pub fn best_fit(group1: &[f64], group2: &[f64], config: &McmcConfig) -> Result<PosteriorSamples> {
    if group1.len() < 2 || group2.len() < 2 {
        return Err(domain("each group needs at least two observations"));
    }
    config.validate()?;
    let prior = PriorBounds::from_data(group1, group2)?;
    let model = Model { group1, group2, prior };
    let pooled_sd = (prior.sigma.0 / 0.01).max(f64::MIN_POSITIVE);
    let (m1, m2) = (mean(group1), mean(group2));
    let (s1, s2) = (sample_sd(group1).max(0.05 * pooled_sd), sample_sd(group2).max(0.05 * pooled_sd));
    let nu_starts = [5.0, 30.0, 80.0, 150.0];

    let mut chains: Vec<Chain> = (0..config.chains)
        .map(|c| {
            let mut rng = stream_rng(config.seed, c as u64);
            let spread = |rng: &mut rand_chacha::ChaCha8Rng| rng.random_range(-1.0..1.0);
            let state = [
                m1 + spread(&mut rng) * s1,
                s1 * (1.0 + 0.5 * spread(&mut rng)),
                m2 + spread(&mut rng) * s2,
                s2 * (1.0 + 0.5 * spread(&mut rng)),
                nu_starts[c % nu_starts.len()],
            ];
            let n1 = (group1.len() as f64).sqrt();
            let n2 = (group2.len() as f64).sqrt();
            let steps = [s1 / n1, s1 / (2.0 * n1), s2 / n2, s2 / (2.0 * n2), 10.0];
            Chain { state, steps, rng, draws: Vec::new(), accepted: [0; 5], proposals: 0 }
        })
        .collect();

    chains.par_iter_mut().for_each(|c| model.run_burn_in(c, config.burn_in));
    let mut r_hat = [f64::INFINITY; 5];
    for round in 0..=config.max_extensions {
        chains.par_iter_mut().for_each(|c| model.run_sampling(c, config.draws));
        r_hat = split_r_hat_all(&chains);
        if r_hat.iter().all(|&r| r < config.r_hat_threshold) {
            break;
        }
        if round < config.max_extensions {
            log::warn!(
                "R-hat {:.4} above {}: extending chains",
                r_hat.iter().copied().fold(0.0, f64::max),
                config.r_hat_threshold
            );
        }
    }
    let converged = r_hat.iter().all(|&r| r < config.r_hat_threshold);
    if !converged {
        log::warn!("MCMC did not converge: R-hat {r_hat:?}");
    }

    let draws_per_chain = chains[0].draws.len();
    let column = |k: usize| -> Vec<f64> { chains.iter().flat_map(|c| c.draws.iter().map(move |d| d[k])).collect() };
    let proposals: usize = chains.iter().map(|c| c.proposals).sum();
    let mut acceptance = [0.0; 5];
    for (k, a) in acceptance.iter_mut().enumerate() {
        *a = chains.iter().map(|c| c.accepted[k]).sum::<usize>() as f64 / proposals as f64;
    }
    Ok(PosteriorSamples {
        mu1: column(0),
        sigma1: column(1),
        mu2: column(2),
        sigma2: column(3),
        nu: column(4),
        chains: config.chains,
        draws_per_chain,
        acceptance,
        r_hat,
        converged,
    })
}

fn split_r_hat_all(chains: &[Chain]) -> [f64; 5] {
    let mut out = [0.0; 5];
    for (k, r) in out.iter_mut().enumerate() {
        let series: Vec<Vec<f64>> = chains.iter().map(|c| c.draws.iter().map(|d| d[k]).collect()).collect();
        *r = split_r_hat(&series);
    }
    out
}

/// Split-R̂ over equal-length chains: every chain is halved before the
/// between/within variance comparison.
pub fn split_r_hat(chains: &[Vec<f64>]) -> f64 {
    let half = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    if half < 2 {
        return f64::INFINITY;
    }
    let pieces: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[half..2 * half]]).collect();
    let n = half as f64;
    let means: Vec<f64> = pieces.iter().map(|p| mean(p)).collect();
    let w = pieces.iter().zip(&means).map(|(p, m)| p.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sum::<f64>()
        / pieces.len() as f64;
    let grand = mean(&means);
    let b = n * means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (pieces.len() as f64 - 1.0);
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

/// Per-draw `(mu1 - mu2) / sqrt((sigma1² + sigma2²) / 2)`.
pub fn effect_size(draws: &PosteriorSamples) -> Vec<f64> {
    (0..draws.len())
        .map(|i| (draws.mu1[i] - draws.mu2[i]) / ((draws.sigma1[i].powi(2) + draws.sigma2[i].powi(2)) / 2.0).sqrt())
        .collect()
}

/// Highest density interval; `mass` of the draws lie within `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hdi {
    pub low: f64,
    pub high: f64,
    pub mass: f64,
}

impl Hdi {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.low && v <= self.high
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

/// Shortest window over the sorted samples holding `⌈mass · N⌉` of them.
pub fn hdi(samples: &[f64], mass: f64) -> Result<Hdi> {
    if samples.len() < 100 {
        return Err(domain(format!("HDI needs at least 100 samples, got {}", samples.len())));
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(domain(format!("HDI mass must lie in (0, 1), got {mass}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = kept_count(mass, sorted.len());
    let mut best = 0;
    for i in 1..=sorted.len() - k {
        if sorted[i + k - 1] - sorted[i] < sorted[best + k - 1] - sorted[best] {
            best = i;
        }
    }
    Ok(Hdi { low: sorted[best], high: sorted[best + k - 1], mass })
}

/// Probability that a fresh group-1 observation exceeds a fresh group-2 observation.
///
/// Every posterior draw contributes one predictive pair.
pub fn posterior_predictive_exceedance(post: &PosteriorSamples, seed: u64) -> Result<f64> {
    if post.is_empty() {
        return Err(Error::Empty("posterior draws"));
    }
    let mut rng = stream_rng(seed, u64::MAX);
    let mut wins = 0usize;
    for i in 0..post.len() {
        let t = StudentT::new(post.nu[i]).map_err(|e| domain(e.to_string()))?;
        let y1 = post.mu1[i] + post.sigma1[i] * t.sample(&mut rng);
        let y2 = post.mu2[i] + post.sigma2[i] * t.sample(&mut rng);
        wins += (y1 > y2) as usize;
    }
    Ok(wins as f64 / post.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpaSweepPoint {
    pub fpa_size: usize,
    pub probability: f64,
    pub mean_fpa_psnr: f64,
    pub converged: bool,
}

/// For each FPA resolution, the posterior-predictive probability that an FPA image beats a rosette image.
pub fn fpa_outperform_sweep(
    rosette_psnrs: &[f64],
    corpus: &[ImageGrid],
    fpa_sizes: &[usize],
    config: &McmcConfig,
) -> Result<Vec<FpaSweepPoint>> {
    if rosette_psnrs.is_empty() || corpus.is_empty() || fpa_sizes.is_empty() {
        return Err(Error::Empty("FPA sweep input"));
    }
    fpa_sizes
        .iter()
        .map(|&size| {
            let fpa: Vec<f64> =
                corpus.par_iter().map(|img| Ok(psnr(&fpa_simulate(img, size)?, img)?.psnr_db)).collect::<Result<_>>()?;
            let post = best_fit(&fpa, rosette_psnrs, config)?;
            Ok(FpaSweepPoint {
                fpa_size: size,
                probability: posterior_predictive_exceedance(&post, config.seed)?,
                mean_fpa_psnr: mean(&fpa),
                converged: post.converged,
            })
        })
        .collect()
}

/// CSV with one row per parameter plus the effect size.
pub fn summary_csv(post: &PosteriorSamples, mass: f64) -> Result<String> {
    let mut out = String::from("parameter,mean,median,hdi_low,hdi_high,r_hat\n");
    let effect = effect_size(post);
    let effect_r_hat = split_r_hat(&effect.chunks(post.draws_per_chain).map(<[f64]>::to_vec).collect::<Vec<_>>());
    let rows =
        (0..5).map(|k| (PARAMETERS[k], post.parameter(k), post.r_hat[k])).chain([("effect_size", &effect[..], effect_r_hat)]);
    for (name, values, r_hat) in rows {
        let h = hdi(values, mass)?;
        out.push_str(&format!("{name},{},{},{},{},{}\n", mean(values), median(values), h.low, h.high, r_hat));
    }
    Ok(out)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Equal-width histogram as CSV (`bin_low,bin_high,count`).
pub fn histogram_csv(values: &[f64], bins: usize) -> String {
    let mut out = String::from("bin_low,bin_high,count\n");
    if values.is_empty() || bins == 0 {
        return out;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
    }
    for (i, c) in counts.iter().enumerate() {
        out.push_str(&format!("{},{},{c}\n", lo + i as f64 * width, lo + (i + 1) as f64 * width));
    }
    out
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::Normal;

    fn normal_draws(seed: u64, n: usize, mu: f64, sd: f64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 7);
        let d = Normal::new(mu, sd).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn quick() -> McmcConfig {
        McmcConfig { draws: 5_000, burn_in: 2_000, seed: 3, ..McmcConfig::default() }
    }

    #[test]
    fn cauchy_and_normal_limits() {
        let cauchy = student_t_log_density(0.0, StudentTParams { mu: 0.0, sigma: 1.0, nu: 1.0 }).unwrap().exp();
        assert!((cauchy - 1.0 / std::f64::consts::PI).abs() < 1e-12);
        let normal = student_t_log_density(0.0, StudentTParams { mu: 0.0, sigma: 1.0, nu: 1e6 }).unwrap().exp();
        assert!((normal - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-6);
        assert!(student_t_log_density(0.0, StudentTParams { mu: 0.0, sigma: 0.0, nu: 2.0 }).is_err());
        assert!(student_t_log_density(0.0, StudentTParams { mu: 0.0, sigma: 1.0, nu: 0.5 }).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        for nu in [1.0, 4.0, 30.0] {
            let p = StudentTParams { mu: 0.3, sigma: 1.7, nu };
            // composite Simpson over [-50σ, 50σ]
            let (a, b, steps) = (0.3 - 50.0 * 1.7, 0.3 + 50.0 * 1.7, 200_000);
            let h = (b - a) / steps as f64;
            let mut s = 0.0;
            for i in 0..=steps {
                let w = if i == 0 || i == steps {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                s += w * student_t_log_density(a + i as f64 * h, p).unwrap().exp();
            }
            let integral = s * h / 3.0;
            // Cauchy tails beyond 50σ hold 2 atan(1/50)/π of the mass
            let tail = if nu == 1.0 { 2.0 * (1.0f64 / 50.0).atan() / std::f64::consts::PI } else { 0.0 };
            assert!((integral + tail - 1.0).abs() < 1e-6, "nu {nu}: {integral}");
        }
    }

    #[test]
    fn effect_size_substitution() {
        let post = PosteriorSamples {
            mu1: vec![1.0, 3.0, 2.0],
            sigma1: vec![1.0, 3.0, 1.0],
            mu2: vec![1.0, 1.0, 1.0],
            sigma2: vec![1.0, 4.0, 1.0],
            nu: vec![5.0; 3],
            chains: 1,
            draws_per_chain: 3,
            acceptance: [0.0; 5],
            r_hat: [1.0; 5],
            converged: true,
        };
        let e = effect_size(&post);
        assert_eq!(e[0], 0.0);
        assert!((e[1] - 2.0 / 12.5f64.sqrt()).abs() < 1e-12);
        assert!((e[2] - 1.0).abs() < 1e-12);
        let swapped: Vec<f64> = effect_size(&post.swapped());
        for (a, b) in e.iter().zip(&swapped) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn hdi_cases() {
        let c = hdi(&vec![4.5; 200], 0.95).unwrap();
        assert_eq!((c.low, c.high), (4.5, 4.5));
        let uniform: Vec<f64> = (0..10_000).map(|i| (i as f64 + 0.5) / 10_000.0).collect();
        assert!((hdi(&uniform, 0.95).unwrap().width() - 0.95).abs() < 0.01);
        assert!(hdi(&uniform[..99], 0.95).is_err());
        assert!(hdi(&uniform, 1.0).is_err());
        let normal = normal_draws(1, 100_000, 0.0, 1.0);
        let h = hdi(&normal, 0.95).unwrap();
        assert!((h.low + 1.96).abs() < 0.04 && (h.high - 1.96).abs() < 0.04);
        assert!((h.low + h.high - 2.0 * median(&normal)).abs() < 0.05);
    }

    #[test]
    fn split_r_hat_detects_disagreement() {
        let a = normal_draws(1, 2000, 0.0, 1.0);
        let b = normal_draws(2, 2000, 0.0, 1.0);
        assert!(split_r_hat(&[a.clone(), b.clone()]) < 1.01);
        let c = normal_draws(3, 2000, 5.0, 1.0);
        assert!(split_r_hat(&[a, c]) > 1.5);
    }

    #[test]
    fn identical_groups_give_null_effect() {
        let g = normal_draws(5, 200, 20.0, 1.5);
        let post = best_fit(&g, &g, &quick()).unwrap();
        assert!(post.converged, "{:?}", post.r_hat);
        assert!(hdi(&effect_size(&post), 0.95).unwrap().contains(0.0));
        assert!(post.acceptance.iter().all(|&a| a > 0.1 && a < 0.9), "{:?}", post.acceptance);
    }

    #[test]
    fn unit_shift_is_recovered() {
        let g1 = normal_draws(11, 200, 0.0, 1.0);
        let g2 = normal_draws(12, 200, 1.0, 1.0);
        let post = best_fit(&g1, &g2, &quick()).unwrap();
        assert!(post.converged);
        let e = effect_size(&post);
        assert!((mean(&e) + 1.0).abs() < 0.25, "{}", mean(&e));
        assert!(hdi(&e, 0.95).unwrap().high < 0.0);
    }

    #[test]
    fn fit_is_deterministic_and_shift_invariant() {
        let g1 = normal_draws(21, 50, 10.0, 2.0);
        let g2 = normal_draws(22, 50, 11.0, 2.0);
        let cfg = McmcConfig { draws: 2_000, burn_in: 1_000, seed: 9, ..McmcConfig::default() };
        let a = best_fit(&g1, &g2, &cfg).unwrap();
        assert_eq!(a, best_fit(&g1, &g2, &cfg).unwrap());
        let s1: Vec<f64> = g1.iter().map(|v| v + 40.0).collect();
        let s2: Vec<f64> = g2.iter().map(|v| v + 40.0).collect();
        let b = best_fit(&s1, &s2, &cfg).unwrap();
        assert!(ks_two_sample(&effect_size(&a), &effect_size(&b)) < 0.05);
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        assert!(best_fit(&[1.0], &[1.0, 2.0], &quick()).is_err());
        assert!(best_fit(&[3.0, 3.0], &[3.0, 3.0], &quick()).is_err());
        let one_chain = McmcConfig { chains: 1, ..quick() };
        assert!(best_fit(&[1.0, 2.0], &[1.0, 2.0], &one_chain).is_err());
    }

    #[test]
    fn predictive_exceedance_tracks_separation() {
        let g1 = normal_draws(31, 100, 5.0, 1.0);
        let g2 = normal_draws(32, 100, 0.0, 1.0);
        let post = best_fit(&g1, &g2, &quick()).unwrap();
        assert!(posterior_predictive_exceedance(&post, 1).unwrap() > 0.99);
        assert!(posterior_predictive_exceedance(&post.swapped(), 1).unwrap() < 0.01);
    }

    #[test]
    fn ks_statistic_values() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0, 5.0, 6.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn csv_outputs() {
        let g1 = normal_draws(41, 30, 0.0, 1.0);
        let g2 = normal_draws(42, 30, 0.5, 1.0);
        let post = best_fit(&g1, &g2, &McmcConfig { draws: 500, burn_in: 500, ..quick() }).unwrap();
        let csv = summary_csv(&post, 0.95).unwrap();
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.lines().nth(6).unwrap().starts_with("effect_size,"));
        let h = histogram_csv(&post.nu, 10);
        assert_eq!(h.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum::<usize>(), post.len());
    }
}
