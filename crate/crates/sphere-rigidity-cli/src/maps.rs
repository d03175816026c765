//! Map arguments: named families (`id`, `ellipsoid(0.1)`, …) or a JSON file.

use std::path::Path;

use anyhow::{bail, Context, Result};
use sphere_rigidity::experiments::{ellipsoid_family, flip_family, short_homothety_family, stretch_family};
use sphere_rigidity::harmonic_basis::{SphereMap, SphereMapJson};

/// Parses `name` or `name(σ)`; anything else is read as a JSON map file.
pub fn parse_map(text: &str, n: usize) -> Result<SphereMap> {
    let text = text.trim();
    let (name, arg) = match text.split_once('(') {
        Some((name, rest)) => {
            let inner = rest.strip_suffix(')').with_context(|| format!("unbalanced parenthesis in `{text}`"))?;
            let v: f64 = inner.trim().parse().with_context(|| format!("bad parameter in `{text}`"))?;
            (name.trim(), Some(v))
        }
        None => (text, None),
    };
    let need = |a: Option<f64>| a.with_context(|| format!("`{name}` needs a parameter, e.g. {name}(0.1)"));
    let map = match name {
        "id" | "identity" => {
            if arg.is_some() {
                bail!("`id` takes no parameter");
            }
            SphereMap::identity(n)
        }
        "flip" => flip_family(need(arg)?)?,
        "stretch" => stretch_family(need(arg)?)?,
        "short_homothety" | "homothety" => short_homothety_family(need(arg)?)?,
        "ellipsoid" => ellipsoid_family(need(arg)?)?,
        _ if arg.is_some() => bail!("unknown map `{name}` (id, flip, stretch, short_homothety, ellipsoid)"),
        _ => return read_map_file(Path::new(text)),
    };
    Ok(map)
}

pub fn read_map_file(path: &Path) -> Result<SphereMap> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read map file {}", path.display()))?;
    let json: SphereMapJson =
        serde_json::from_str(&text).with_context(|| format!("invalid map JSON in {}", path.display()))?;
    Ok(SphereMap::from_json(json)?)
}
