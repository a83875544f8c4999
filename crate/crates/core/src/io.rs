//! CSV readers and writers for trajectories, ensembles and measures.

use std::io::{Read, Write};

use crate::engine::{EmpiricalMeasure, Fate, ReplicateRecord, Trajectory};
use crate::error::{Error, Result};

/// Writes `t,x` rows. Floats use shortest round-trip formatting.
pub fn write_trajectory<W: Write>(w: W, tr: &Trajectory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "x"])?;
    for (i, x) in tr.densities.iter().enumerate() {
        out.write_record([(tr.t_start + i as u64).to_string(), x.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectory<R: Read>(r: R) -> Result<Vec<(u64, f64)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let (t, x): (u64, f64) = rec?;
        rows.push((t, x));
    }
    Ok(rows)
}

/// Writes `replicate,fate,t_hit,final_x`; `t_hit` is empty for interior paths.
pub fn write_ensemble<W: Write>(w: W, records: &[ReplicateRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["replicate", "fate", "t_hit", "final_x"])?;
    for r in records {
        out.write_record([
            r.replicate.to_string(),
            r.fate.label().to_string(),
            r.fate.t_hit().map(|t| t.to_string()).unwrap_or_default(),
            r.final_x.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ensemble<R: Read>(r: R) -> Result<Vec<ReplicateRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let (replicate, fate, t_hit, final_x): (u64, String, Option<u64>, f64) = rec?;
        out.push(ReplicateRecord {
            replicate,
            fate: Fate::from_parts(&fate, t_hit)?,
            final_x,
        });
    }
    Ok(out)
}

/// Writes `bin_lo,bin_hi,mass` rows followed by `below_mass` and `above_mass` footer rows.
pub fn write_measure<W: Write>(w: W, m: &EmpiricalMeasure) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin_lo", "bin_hi", "mass"])?;
    let e = m.edges();
    for (i, mass) in m.masses().iter().enumerate() {
        out.write_record([e[i].to_string(), e[i + 1].to_string(), mass.to_string()])?;
    }
    out.write_record(["below_mass".to_string(), String::new(), m.below_mass().to_string()])?;
    out.write_record(["above_mass".to_string(), String::new(), m.above_mass().to_string()])?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureTable {
    pub bins: Vec<(f64, f64, f64)>,
    pub below_mass: f64,
    pub above_mass: f64,
}

pub fn read_measure<R: Read>(r: R) -> Result<MeasureTable> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut table = MeasureTable {
        bins: Vec::new(),
        below_mass: 0.0,
        above_mass: 0.0,
    };
    let num = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Validation(format!("bad number `{s}` in measure file")))
    };
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        match field(0) {
            "below_mass" => table.below_mass = num(field(2))?,
            "above_mass" => table.above_mass = num(field(2))?,
            lo => table.bins.push((num(lo)?, num(field(1))?, num(field(2))?)),
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_ensemble, run_trajectory, empirical_measure, SimConfig, SuccessRule};
    use crate::{ModelSpec, SeedSpec};

    #[test]
    fn trajectory_round_trip() {
        let m = ModelSpec::parse("ricker", &[("r", "normal:0.5,1"), ("a", "1")]).unwrap();
        let cfg = SimConfig {
            t_max: 200,
            ..Default::default()
        };
        let tr = run_trajectory(&m, &cfg, 0.3, &mut SeedSpec::new(1).stream(0)).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &tr).unwrap();
        let rows = read_trajectory(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), tr.densities.len());
        for (i, (t, x)) in rows.iter().enumerate() {
            assert_eq!(*t, i as u64);
            assert_eq!(*x, tr.densities[i]);
        }
    }

    #[test]
    fn ensemble_and_measure_round_trip() {
        let m = ModelSpec::parse("mate-limitation", &[("lambda", "lognormal:0.1,0.5"), ("h", "10")]).unwrap();
        let cfg = SimConfig::default();
        let r = run_ensemble(&m, &cfg, 95.0, 50, SeedSpec::new(2), SuccessRule::NotExtinct).unwrap();
        let mut buf = Vec::new();
        write_ensemble(&mut buf, &r.replicates).unwrap();
        assert_eq!(read_ensemble(buf.as_slice()).unwrap(), r.replicates);

        let tr = run_trajectory(&m, &cfg, 95.0, &mut SeedSpec::new(2).stream(0)).unwrap();
        let meas = empirical_measure(&tr, &cfg).unwrap();
        let mut buf = Vec::new();
        write_measure(&mut buf, &meas).unwrap();
        let t = read_measure(buf.as_slice()).unwrap();
        assert_eq!(t.bins.len(), meas.counts().len());
        assert_eq!(t.below_mass, meas.below_mass());
        assert_eq!(t.above_mass, meas.above_mass());
        let total: f64 = t.bins.iter().map(|b| b.2).sum::<f64>() + t.below_mass + t.above_mass;
        assert!((total - 1.0).abs() < 1e-12);
    }
}
