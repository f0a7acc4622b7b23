//! Diamond lattice sites around the NV centre and localization of dark spins
//! from their coupling estimates.
//!
//! Lattice indices count quarter cells (a/4) in the cubic frame with the
//! vacancy at the origin and the NV nitrogen at (1, 1, 1). Cartesian
//! positions use the NV frame: z along [111] and x along (1, 1, −2)/√6.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{dipolar_coupling, CouplingPair, DipoleGeometry};
use crate::sequence::fmt_num;

/// Conventional cubic cell of diamond, m.
pub const LATTICE_CONSTANT: f64 = 0.3567e-9;
pub const MAX_RADIUS: f64 = 5e-9;
/// Lattice index of the NV nitrogen.
pub const NV_NITROGEN: [i32; 3] = [1, 1, 1];

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn to_nv_frame(idx: [i32; 3]) -> [f64; 3] {
    let q = LATTICE_CONSTANT / 4.0;
    let [i, j, k] = idx.map(|v| v as f64 * q);
    [(i + j - 2.0 * k) / 6f64.sqrt(), (j - i) / SQRT2, (i + j + k) / 3f64.sqrt()]
}

fn is_site(idx: [i32; 3]) -> bool {
    let [i, j, k] = idx;
    let s = (i + j + k).rem_euclid(4);
    let even = i % 2 == 0 && j % 2 == 0 && k % 2 == 0;
    let odd = i % 2 != 0 && j % 2 != 0 && k % 2 != 0;
    (even && s == 0) || (odd && s == 3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSite {
    pub index: [i32; 3],
    /// NV frame, m.
    pub position: [f64; 3],
    pub r: f64,
    pub theta: f64,
    /// Sites sharing this (r⊥, z) circle.
    pub multiplicity: usize,
}

impl LatticeSite {
    pub fn new(index: [i32; 3]) -> Result<Self> {
        if !is_site(index) {
            return Err(Error::Domain(format!("{index:?} is not a diamond lattice site")));
        }
        if index == [0, 0, 0] || index == NV_NITROGEN {
            return Err(Error::Domain("the vacancy and the NV nitrogen are not candidate sites".into()));
        }
        let position = to_nv_frame(index);
        let geom = DipoleGeometry::from_vector(position)?;
        Ok(Self { index, position, r: geom.r(), theta: geom.theta(), multiplicity: 1 })
    }

    pub fn r_perp(&self) -> f64 {
        self.position[0].hypot(self.position[1])
    }

    /// Exact key of the (r⊥, z) circle: (3·r⊥², z) in quarter-cell units.
    pub fn circle_key(&self) -> (i64, i64) {
        let [i, j, k] = self.index.map(i64::from);
        let s = i + j + k;
        (3 * (i * i + j * j + k * k) - s * s, s)
    }

    /// Sites with equal key have identical (Δ, Ω); z enters only by |z|.
    pub fn class_key(&self) -> (i64, i64) {
        let (rp, z) = self.circle_key();
        (rp, z.abs())
    }
}

/// Every lattice site with 0 < r ≤ radius, excluding the NV nitrogen,
/// ordered by distance then index.
pub fn generate_sites(radius: f64) -> Result<Vec<LatticeSite>> {
    if !(radius > 0.0 && radius <= MAX_RADIUS) {
        return Err(Error::Domain(format!("radius must lie in (0, 5 nm], got {radius:e} m")));
    }
    let m = (4.0 * radius / LATTICE_CONSTANT).ceil() as i32 + 1;
    let limit2 = radius * radius * (1.0 + 1e-12);
    let mut sites: Vec<LatticeSite> = (-m..=m)
        .into_par_iter()
        .flat_map_iter(|i| {
            (-m..=m).flat_map(move |j| {
                (-m..=m).filter_map(move |k| {
                    let idx = [i, j, k];
                    if !is_site(idx) || idx == [0, 0, 0] || idx == NV_NITROGEN {
                        return None;
                    }
                    let p = to_nv_frame(idx);
                    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= limit2).then(|| LatticeSite::new(idx).expect("valid site"))
                })
            })
        })
        .collect();
    sites.sort_by(|a, b| a.r.total_cmp(&b.r).then(a.index.cmp(&b.index)));
    let mut counts: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for s in &sites {
        *counts.entry(s.circle_key()).or_default() += 1;
    }
    for s in &mut sites {
        s.multiplicity = counts[&s.circle_key()];
    }
    Ok(sites)
}

/// Couplings a dark spin on `site` would show.
pub fn site_predictions(site: &LatticeSite) -> CouplingPair {
    dipolar_coupling(&DipoleGeometry::new(site.r, site.theta).expect("site geometry is valid"))
}

/// Coupling estimates of one dark spin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinObservation {
    pub label: String,
    /// Hz.
    pub delta: f64,
    pub sigma_delta: f64,
    /// |Ω| estimate, Hz; absent for Δ-only localization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_omega: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMap {
    pub label: String,
    pub sites: Vec<LatticeSite>,
    pub prob: Vec<f64>,
    /// Site indices (into `sites`) of the 68 % and 95 % sets, most probable first.
    pub set68: Vec<usize>,
    pub set95: Vec<usize>,
    pub warnings: Vec<String>,
}

impl PosteriorMap {
    /// Tightest set (68 or 95) holding each site.
    pub fn membership(&self) -> Vec<Option<u8>> {
        let mut out = vec![None; self.sites.len()];
        for &i in &self.set95 {
            out[i] = Some(95);
        }
        for &i in &self.set68 {
            out[i] = Some(68);
        }
        out
    }
}

/// Candidate sites with their predicted couplings and symmetry classes,
/// reusable across many localizations.
#[derive(Debug, Clone)]
pub struct Localizer {
    sites: Vec<LatticeSite>,
    predictions: Vec<CouplingPair>,
    /// Site indices grouped by symmetry class.
    classes: Vec<Vec<usize>>,
}

impl Localizer {
    pub fn new(sites: &[LatticeSite]) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Localization("no candidate sites".into()));
        }
        let mut classes: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        for (i, s) in sites.iter().enumerate() {
            classes.entry(s.class_key()).or_default().push(i);
        }
        Ok(Self {
            sites: sites.to_vec(),
            predictions: sites.par_iter().map(site_predictions).collect(),
            classes: classes.into_values().collect(),
        })
    }

    pub fn sites(&self) -> &[LatticeSite] {
        &self.sites
    }

    /// Gaussian likelihood in Δ and |Ω| with a flat prior over sites.
    /// Confidence sets are grown from whole symmetry classes, most probable
    /// first, until they hold 68 % and 95 % of the mass.
    pub fn localize(&self, obs: &SpinObservation) -> Result<PosteriorMap> {
        let (prob, set68, set95, warnings) = self.posterior(obs)?;
        Ok(PosteriorMap { label: obs.label.clone(), sites: self.sites.clone(), prob, set68, set95, warnings })
    }

    #[allow(clippy::type_complexity)]
    fn posterior(&self, obs: &SpinObservation) -> Result<(Vec<f64>, Vec<usize>, Vec<usize>, Vec<String>)> {
        if !(obs.sigma_delta > 0.0) || obs.omega.is_some() && !(obs.sigma_omega.unwrap_or(0.0) > 0.0) {
            return Err(Error::Domain("localization needs positive uncertainties".into()));
        }
        if !obs.delta.is_finite() || obs.omega.is_some_and(|o| !o.is_finite()) {
            return Err(Error::Domain("coupling estimates must be finite".into()));
        }
        let mut warnings = Vec::new();
        let omega = obs.omega.map(|o| (o.abs(), obs.sigma_omega.unwrap()));
        if omega.is_none() {
            warnings.push(format!("{}: no Ω estimate, localizing from Δ alone (ring-shaped regions)", obs.label));
        }
        let delta_flat = obs.sigma_delta.is_infinite();
        let z2: Vec<f64> = self
            .predictions
            .iter()
            .map(|c| {
                let zd = if delta_flat { 0.0 } else { (c.delta - obs.delta) / obs.sigma_delta };
                let zo = match omega {
                    Some((o, s)) if s.is_finite() => (c.omega.abs() - o) / s,
                    _ => 0.0,
                };
                zd * zd + zo * zo
            })
            .collect();
        let best = z2.iter().copied().fold(f64::INFINITY, f64::min);
        let closest = || {
            let mut order: Vec<usize> = (0..self.sites.len()).collect();
            order.sort_by(|&a, &b| z2[a].total_cmp(&z2[b]));
            order
                .iter()
                .take(5)
                .map(|&i| format!("{:?} (r = {:.3} nm, z-score {:.1})", self.sites[i].index, self.sites[i].r * 1e9, z2[i].sqrt()))
                .collect::<Vec<_>>()
                .join(", ")
        };
        // exp(−z²/2) underflows beyond this.
        if best > 1400.0 {
            return Err(Error::Localization(format!(
                "{}: no site is compatible with the couplings; closest: {}",
                obs.label,
                closest()
            )));
        }
        if best > 11.8 {
            warnings.push(format!("{}: poor agreement with every site; closest: {}", obs.label, closest()));
        }
        // Uncertainties far beyond every prediction leave nothing to rank.
        let worst = z2.iter().copied().fold(0.0, f64::max);
        if worst - best < 1e-12 {
            warnings.push(format!("{}: uncertainties too large to discriminate sites, the map is uniform", obs.label));
        }
        let weights: Vec<f64> = z2.iter().map(|z| (-(z - best) / 2.0).exp()).collect();
        let total: f64 = weights.iter().sum();
        let prob: Vec<f64> = weights.iter().map(|w| w / total).collect();

        let mut ranked: Vec<(f64, &Vec<usize>)> = self
            .classes
            .iter()
            .map(|members| (members.iter().map(|&i| prob[i]).sum::<f64>() / members.len() as f64, members))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
        let grow = |level: f64| {
            let mut set = Vec::new();
            let mut mass = 0.0;
            for (_, members) in &ranked {
                if mass >= level - 1e-12 {
                    break;
                }
                mass += members.iter().map(|&i| prob[i]).sum::<f64>();
                set.extend(members.iter().copied());
            }
            set
        };
        let set68 = grow(0.68);
        let set95 = grow(0.95);
        Ok((prob, set68, set95, warnings))
    }

    /// Whether the symmetry class of `site` lies in the 68 % (level ≤ 0.68)
    /// or 95 % set.
    pub fn covers(&self, obs: &SpinObservation, site: &LatticeSite, level: f64) -> Result<bool> {
        let (_, set68, set95, _) = self.posterior(obs)?;
        let key = site.class_key();
        let set = if level <= 0.68 { &set68 } else { &set95 };
        Ok(set.iter().any(|&i| self.sites[i].class_key() == key))
    }
}

/// One-off localization over `sites`; see [`Localizer::localize`].
pub fn localize(obs: &SpinObservation, sites: &[LatticeSite]) -> Result<PosteriorMap> {
    Localizer::new(sites)?.localize(obs)
}

/// One (r⊥, z) circle of the projected map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub r_perp: f64,
    pub z: f64,
    pub prob: f64,
    pub multiplicity: usize,
    /// 68, 95 or absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<u8>,
}

/// Aggregates sites on the same (r⊥, z) circle.
pub fn project_rperp(map: &PosteriorMap) -> Vec<Circle> {
    let membership = map.membership();
    let mut circles: BTreeMap<(i64, i64), Circle> = BTreeMap::new();
    for (i, s) in map.sites.iter().enumerate() {
        let set = membership[i];
        let c = circles.entry(s.circle_key()).or_insert(Circle {
            r_perp: s.r_perp(),
            z: s.position[2],
            prob: 0.0,
            multiplicity: 0,
            set,
        });
        c.prob += map.prob[i];
        c.multiplicity += 1;
        c.set = match (c.set, set) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
    let mut out: Vec<Circle> = circles.into_values().collect();
    out.sort_by(|a, b| a.z.total_cmp(&b.z).then(a.r_perp.total_cmp(&b.r_perp)));
    out
}

/// Projected map as CSV: r_perp, z (m), summed probability, set (68, 95 or 0).
pub fn circles_to_csv(label: &str, circles: &[Circle], header: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {header} spin={label}");
    out.push_str("r_perp,z,prob,multiplicity,set\n");
    for c in circles {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_num(c.r_perp),
            fmt_num(c.z),
            fmt_num(c.prob),
            c.multiplicity,
            c.set.unwrap_or(0)
        );
    }
    out
}

const PALETTE: [(&str, &str); 4] = [("#d62728", "#f4a582"), ("#1f4e9c", "#92c5de"), ("#2a8c3a", "#a6dba0"), ("#7b3294", "#c2a5cf")];

/// Map of one or more spins in the (r⊥, z) plane: grey lattice circles,
/// 95 % sets in a light tone and 68 % sets in a strong tone per spin.
pub fn render_svg(maps: &[PosteriorMap], header: &str) -> String {
    let projected: Vec<Vec<Circle>> = maps.iter().map(project_rperp).collect();
    let mut extent: f64 = 0.5e-9;
    for c in projected.iter().flatten().filter(|c| c.set.is_some()) {
        extent = extent.max(c.r_perp).max(c.z.abs());
    }
    extent *= 1.15;
    let (w, h, pad) = (640.0, 640.0, 50.0);
    let sx = |r: f64| pad + r / extent * (w - 2.0 * pad);
    let sy = |z: f64| h / 2.0 - z / extent * (h / 2.0 - pad);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(svg, "<!-- {header} -->");
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<line x1="{pad}" y1="{y}" x2="{x2}" y2="{y}" stroke="#444"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{y2}" stroke="#444"/>"##,
        y = h / 2.0,
        x2 = w - pad,
        y2 = h - pad
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">r⊥ (nm)</text><text x="14" y="{}" font-size="14">z</text>"#,
        w / 2.0,
        h - 12.0,
        h / 2.0
    );
    for t in 0..=4 {
        let r = extent * t as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{:.2}</text>"#,
            sx(r),
            h / 2.0 + 16.0,
            r * 1e9
        );
    }
    if let Some(first) = maps.first() {
        for c in project_rperp(first).iter().filter(|c| c.r_perp <= extent && c.z.abs() <= extent) {
            let _ = writeln!(svg, r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#bbbbbb"/>"##, sx(c.r_perp), sy(c.z));
        }
    }
    for (k, circles) in projected.iter().enumerate() {
        let (strong, light) = PALETTE[k % PALETTE.len()];
        for c in circles {
            let (fill, radius) = match c.set {
                Some(68) => (strong, 4.5),
                Some(_) => (light, 4.0),
                None => continue,
            };
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="{radius}" fill="{fill}"/>"#, sx(c.r_perp), sy(c.z));
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="13" fill="{strong}">{}</text>"#,
            w - pad - 60.0,
            pad + 16.0 * k as f64,
            maps[k].label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nitrogen_neighbour_is_excluded() {
        let bond = LATTICE_CONSTANT * 3f64.sqrt() / 4.0;
        let sites = generate_sites(bond * 1.01).unwrap();
        assert_eq!(sites.len(), 3);
        assert!(sites.iter().all(|s| (s.r - bond).abs() < 1e-15));
        assert!(generate_sites(0.1e-9).unwrap().is_empty());
    }

    #[test]
    fn axis_points_along_nitrogen() {
        let p = to_nv_frame(NV_NITROGEN);
        assert!(p[0].abs() < 1e-25 && p[1].abs() < 1e-25 && p[2] > 0.0);
    }

    #[test]
    fn rejects_non_sites() {
        assert!(LatticeSite::new([1, 0, 0]).is_err());
        assert!(LatticeSite::new([0, 0, 0]).is_err());
        assert!(LatticeSite::new([2, 2, 0]).is_ok());
    }
}
