use std::io::{self, Read, Write};

use super::ensemble::ParticleEnsemble;

/// Columnar little-endian dump: `u64 dim`, `u64 n`, then each position axis and
/// each velocity axis as `n` consecutive `f64` values.
pub fn write_binary<W: Write>(e: &ParticleEnsemble, mut w: W) -> io::Result<()> {
    w.write_all(&(e.dim() as u64).to_le_bytes())?;
    w.write_all(&(e.len() as u64).to_le_bytes())?;
    for a in 0..e.dim() {
        for i in 0..e.len() {
            w.write_all(&e.position(i)[a].to_le_bytes())?;
        }
    }
    for a in 0..e.dim() {
        for i in 0..e.len() {
            w.write_all(&e.velocity(i)[a].to_le_bytes())?;
        }
    }
    Ok(())
}

/// Inverse of [`write_binary`]; returns `(dim, positions, velocities)` row by row.
#[allow(clippy::type_complexity)]
pub fn read_binary<R: Read>(mut r: R) -> io::Result<(usize, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let dim = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let n = u64::from_le_bytes(word) as usize;
    let mut read_block = || -> io::Result<Vec<Vec<f64>>> {
        let mut rows = vec![vec![0.0; dim]; n];
        for a in 0..dim {
            for row in rows.iter_mut() {
                r.read_exact(&mut word)?;
                row[a] = f64::from_le_bytes(word);
            }
        }
        Ok(rows)
    };
    let positions = read_block()?;
    let velocities = read_block()?;
    Ok((dim, positions, velocities))
}

/// CSV with header `x0,..,v0,..`; floats use Rust's shortest round-trip formatting.
pub fn write_csv<W: Write>(e: &ParticleEnsemble, mut w: W) -> io::Result<()> {
    let dim = e.dim();
    let header: Vec<String> = (0..dim)
        .map(|a| format!("x{a}"))
        .chain((0..dim).map(|a| format!("v{a}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..e.len() {
        let row: Vec<String> = e
            .position(i)
            .iter()
            .chain(e.velocity(i))
            .map(|v| format!("{v:?}"))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particles::InitialLaw;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn binary_round_trip(n in 0usize..50, dim in 1usize..4, seed in any::<u64>()) {
            let law = InitialLaw::Gaussian { x0: vec![0.5; dim], sigma: 2.0 };
            let e = ParticleEnsemble::sample(n, dim, seed, &law).unwrap();
            let mut buf = Vec::new();
            write_binary(&e, &mut buf).unwrap();
            prop_assert_eq!(buf.len(), 16 + 16 * n * dim);
            let (d, xs, vs) = read_binary(buf.as_slice()).unwrap();
            prop_assert_eq!(d, dim);
            for i in 0..n {
                prop_assert_eq!(xs[i].as_slice(), e.position(i));
                prop_assert_eq!(vs[i].as_slice(), e.velocity(i));
            }
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let e = ParticleEnsemble::sample(
            3,
            2,
            1,
            &InitialLaw::Point {
                x0: vec![1.0, -1.0],
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&e, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x0,x1,v0,v1");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1.0,-1.0,"));
    }
}
