//! Artifact writers: atomic file replacement, CSV series and legacy VTK.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use anyhow::Context;

use thermistor_core::mesh::Mesh;

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let name = path
        .file_name()
        .with_context(|| format!("{} has no file name", path.display()))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

/// Two-column CSV with a header line.
pub fn series_csv(header: &str, times: &[f64], values: &[f64]) -> String {
    let mut s = String::with_capacity(32 * times.len());
    s.push_str(header);
    s.push('\n');
    for (t, v) in times.iter().zip(values) {
        let _ = writeln!(s, "{t:e},{v:e}");
    }
    s
}

/// Legacy ASCII unstructured grid with point scalars.
pub fn vtk_unstructured(title: &str, mesh: &Mesh, length_scale: f64, fields: &[(&str, &[f64])]) -> String {
    let n = mesh.n_vertices();
    let tets = mesh.tets();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID"
    );
    let _ = writeln!(s, "POINTS {n} double");
    for p in mesh.vertices() {
        let _ = writeln!(
            s,
            "{:e} {:e} {:e}",
            p[0] * length_scale,
            p[1] * length_scale,
            p[2] * length_scale
        );
    }
    let _ = writeln!(s, "CELLS {} {}", tets.len(), 5 * tets.len());
    for t in tets {
        let _ = writeln!(s, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", tets.len());
    for _ in tets {
        s.push_str("10\n");
    }
    let _ = writeln!(s, "POINT_DATA {n}");
    for (name, values) in fields {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in values.iter() {
            let _ = writeln!(s, "{v:e}");
        }
    }
    s
}
