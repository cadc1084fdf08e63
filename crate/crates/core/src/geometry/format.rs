//! Plain-text geometry files.
//!
//! ```text
//! # hetagg-geometry v1
//! # seed 1234
//! # theta 1.8 0.5 3 3
//! # columns x y z r label
//! 0.0000000000000000e0 0.0000000000000000e0 0.0000000000000000e0 1.2034000000000000e1 1
//! ...
//! ```
//!
//! One particle per line, coordinates and radius in nm written with 17
//! significant digits, so that reading a file back reproduces every value
//! bit for bit. `seed` and `theta` headers are optional.

use std::fmt::Write as _;

use super::{Aggregate, Label, ModelParams, Particle, Provenance, Vec3};
use crate::error::{Error, Result};

pub const FORMAT_HEADER: &str = "# hetagg-geometry v1";

pub fn write_aggregate(a: &Aggregate) -> String {
    let mut out = String::with_capacity(64 * (a.len() + 4));
    out.push_str(FORMAT_HEADER);
    out.push('\n');
    if let Some(prov) = &a.provenance {
        let p = &prov.params;
        let _ = writeln!(out, "# seed {}", prov.seed);
        let _ = writeln!(
            out,
            "# theta {:.16e} {:.16e} {} {}",
            p.theta_df, p.theta_rho, p.theta_0, p.theta_1
        );
    }
    out.push_str("# columns x y z r label\n");
    for p in &a.particles {
        let _ = writeln!(
            out,
            "{:.16e} {:.16e} {:.16e} {:.16e} {}",
            p.position.x, p.position.y, p.position.z, p.radius, p.label
        );
    }
    out
}

pub fn read_aggregate(text: &str) -> Result<Aggregate> {
    let mut particles = Vec::new();
    let mut seed = None;
    let mut theta = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            let mut words = header.split_whitespace();
            match words.next() {
                Some("seed") => {
                    let v = words.next().ok_or_else(|| Error::parse(line_no, "missing seed value"))?;
                    seed = Some(v.parse::<u64>().map_err(|_| Error::parse(line_no, format!("bad seed {v:?}")))?);
                }
                Some("theta") => {
                    let vals: Vec<&str> = words.collect();
                    if vals.len() != 4 {
                        return Err(Error::parse(line_no, "theta header needs 4 values"));
                    }
                    let spec = vals.join(",");
                    theta = Some(
                        spec.parse::<ModelParams>()
                            .map_err(|e| Error::parse(line_no, e.to_string()))?,
                    );
                }
                _ => {}
            }
            continue;
        }
        particles.push(parse_particle(line, line_no)?);
    }
    if particles.is_empty() {
        return Err(Error::parse(0, "geometry contains no particles"));
    }
    let provenance = match (seed, theta) {
        (Some(seed), Some(params)) => Some(Provenance { seed, params, primary_cluster: Vec::new() }),
        _ => None,
    };
    Ok(Aggregate { particles, provenance })
}

fn parse_particle(line: &str, line_no: usize) -> Result<Particle> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(Error::parse(
            line_no,
            format!("expected 5 fields `x y z r label`, found {}", fields.len()),
        ));
    }
    let num = |i: usize, name: &str| -> Result<f64> {
        let v: f64 = fields[i]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad {name} value {:?}", fields[i])))?;
        if !v.is_finite() {
            return Err(Error::parse(line_no, format!("{name} must be finite")));
        }
        Ok(v)
    };
    let position = Vec3::new(num(0, "x")?, num(1, "y")?, num(2, "z")?);
    let radius = num(3, "radius")?;
    if radius <= 0.0 {
        return Err(Error::parse(line_no, format!("radius must be positive, got {radius}")));
    }
    let label = fields[4]
        .parse::<u8>()
        .ok()
        .and_then(Label::from_index)
        .ok_or_else(|| Error::parse(line_no, format!("label must be 0 or 1, got {:?}", fields[4])))?;
    Ok(Particle { position, radius, label })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn malformed_line_names_line_number() {
        let text = "# hetagg-geometry v1\n0 0 0 1 0\n1 2 3 oops 1\n";
        let err = read_aggregate(text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("line 3"));
        assert!(matches!(read_aggregate("0 0 0 1 2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_aggregate("0 0 0 -1 0\n"), Err(Error::Parse { line: 1, .. })));
        assert!(read_aggregate("# only header\n").is_err());
    }

    #[test]
    fn provenance_headers_round_trip() {
        let mut a = Aggregate::new(vec![Particle::new(Vec3::new(0.1, 0.2, 0.3), 11.7, Label::Wo3)]);
        a.provenance = Some(Provenance {
            seed: u64::MAX,
            params: ModelParams::new(1.7, 0.3, 2, 5).unwrap(),
            primary_cluster: Vec::new(),
        });
        let back = read_aggregate(&write_aggregate(&a)).unwrap();
        assert_eq!(back, a);
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(
            raw in prop::collection::vec(
                (any::<f64>(), any::<f64>(), any::<f64>(), 1e-3..1e3f64, any::<bool>()), 1..20),
        ) {
            let ps: Vec<Particle> = raw
                .into_iter()
                .filter(|(x, y, z, _, _)| x.is_finite() && y.is_finite() && z.is_finite())
                .map(|(x, y, z, r, l)| Particle::new(Vec3::new(x, y, z), r, if l { Label::Wo3 } else { Label::Tio2 }))
                .collect();
            prop_assume!(!ps.is_empty());
            let a = Aggregate::new(ps);
            let back = read_aggregate(&write_aggregate(&a)).unwrap();
            for (p, q) in a.particles.iter().zip(&back.particles) {
                prop_assert_eq!(p.position.x.to_bits(), q.position.x.to_bits());
                prop_assert_eq!(p.position.y.to_bits(), q.position.y.to_bits());
                prop_assert_eq!(p.position.z.to_bits(), q.position.z.to_bits());
                prop_assert_eq!(p.radius.to_bits(), q.radius.to_bits());
                prop_assert_eq!(p.label, q.label);
            }
        }
    }
}
