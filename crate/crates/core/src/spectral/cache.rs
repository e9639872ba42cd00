//! Binary on-disk cache for spectral bases, keyed by the mesh hash.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::spectral::SpectralBasis;

const MAGIC: &[u8; 8] = b"SCBASIS1";

pub fn save_basis(path: impl AsRef<Path>, basis: &SpectralBasis) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&basis.mesh_hash().to_le_bytes())?;
        w.write_all(&(basis.num_vertices() as u64).to_le_bytes())?;
        w.write_all(&(basis.k_total() as u64).to_le_bytes())?;
        for &v in basis.eigenvalues() {
            w.write_all(&v.to_le_bytes())?;
        }
        for c in 0..basis.k_total() {
            for i in 0..basis.num_vertices() {
                w.write_all(&basis.phi()[(i, c)].to_le_bytes())?;
            }
        }
        for &m in basis.masses() {
            w.write_all(&m.to_le_bytes())?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Load a cached basis for `mesh` if the file exists, parses, and its mesh
/// hash matches; any mismatch invalidates the cache and returns `None`.
pub fn load_basis(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<Option<SpectralBasis>> {
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    if r.read_exact(&mut magic).is_err() || &magic != MAGIC {
        return Ok(None);
    }
    let read_u64 = |r: &mut BufReader<File>| -> Option<u64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).ok()?;
        Some(u64::from_le_bytes(b))
    };
    let (Some(hash), Some(n), Some(k)) = (read_u64(&mut r), read_u64(&mut r), read_u64(&mut r))
    else {
        return Ok(None);
    };
    if hash != mesh.hash() || n as usize != mesh.num_vertices() {
        return Ok(None);
    }
    let (n, k) = (n as usize, k as usize);
    let mut count = n * k + k + n;
    let mut data = Vec::with_capacity(count);
    let mut b = [0u8; 8];
    while count > 0 {
        if r.read_exact(&mut b).is_err() {
            return Ok(None);
        }
        data.push(f64::from_le_bytes(b));
        count -= 1;
    }
    let eigenvalues = data[..k].to_vec();
    let phi = DMatrix::from_column_slice(n, k, &data[k..k + n * k]);
    let masses = data[k + n * k..].to_vec();
    Ok(Some(SpectralBasis::from_parts(
        eigenvalues,
        phi,
        masses,
        hash,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::compute_basis;
    use crate::synth;

    #[test]
    fn cache_round_trip_and_invalidation() {
        let mesh = synth::icosphere(1).build().unwrap();
        let basis = compute_basis(&mesh, 8).unwrap();
        let mut p = std::env::temp_dir();
        p.push(format!("shapecorr-cache-{}.bin", std::process::id()));
        save_basis(&p, &basis).unwrap();

        let loaded = load_basis(&p, &mesh).unwrap().expect("cache hit");
        assert_eq!(loaded.eigenvalues(), basis.eigenvalues());
        assert_eq!(loaded.phi(), basis.phi());

        // different mesh -> hash mismatch -> miss
        let other = synth::tetrahedron().build().unwrap();
        assert!(load_basis(&p, &other).unwrap().is_none());
        std::fs::remove_file(&p).ok();
    }

    #[test]
    fn missing_file_is_a_miss() {
        let mesh = synth::tetrahedron().build().unwrap();
        assert!(load_basis("/nonexistent/basis.bin", &mesh).unwrap().is_none());
    }
}
