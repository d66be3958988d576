//! Run configuration files.
//!
//! ```toml
//! model = "sis"      # any long flag of the subcommand, without dashes
//! samples = 500
//! x0 = [0.5]         # arrays become comma lists
//!
//! [params]           # model parameters, same keys as --param
//! r0 = 1.5
//! k = 100
//! ```
//!
//! Command line flags override file values; `--param` overrides `[params]`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Params;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    pub params: Params,
    /// `(flag, value)` pairs in file order; flags use `-` in place of `_`.
    pub options: Vec<(String, String)>,
}

fn number(v: &toml::Value, field: &str) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        other => Err(Error::Config(format!("{field}: expected a number, found {}", other.type_str()))),
    }
}

fn scalar(v: &toml::Value, field: &str) -> Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => format!("{f:?}"),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, x)| match x {
                toml::Value::Array(_) | toml::Value::Table(_) => {
                    Err(Error::Config(format!("{field}[{i}]: nested values are not supported")))
                }
                _ => scalar(x, &format!("{field}[{i}]")),
            })
            .collect::<Result<Vec<_>>>()?
            .join(","),
        other => return Err(Error::Config(format!("{field}: unsupported {}", other.type_str()))),
    })
}

pub fn parse_config(text: &str) -> Result<FileConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    let mut out = FileConfig::default();
    for (key, value) in &table {
        if key == "params" {
            let toml::Value::Table(p) = value else {
                return Err(Error::Config("params: expected a table".into()));
            };
            for (k, v) in p {
                let field = format!("params.{k}");
                if let toml::Value::Table(_) = v {
                    return Err(Error::Config(format!("{field}: expected a number, found table")));
                }
                out.params.insert(k.clone(), number(v, &field)?);
            }
        } else {
            out.options.push((key.replace('_', "-"), scalar(value, key)?));
        }
    }
    Ok(out)
}

pub fn load_config<P: AsRef<Path>>(path: P) -> Result<FileConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        e => e,
    })
}

/// `key=value` with a numeric value.
pub fn parse_param(s: &str) -> Result<(String, f64)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--param `{s}`: expected key=value")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(Error::Config(format!("--param `{s}`: empty key")));
    }
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("params.{k}"), format!("`{}` is not a number", v.trim())))?;
    Ok((k.to_string(), v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_and_options() {
        let c = parse_config("model = \"sis\"\nt_max = 10\nx0 = [0.5, 1]\n[params]\nr0 = 1.5\nk = 100\n").unwrap();
        assert_eq!(c.params["r0"], 1.5);
        assert_eq!(c.params["k"], 100.0);
        assert_eq!(c.options[0], ("model".into(), "sis".into()));
        assert!(c.options.contains(&("t-max".into(), "10".into())));
        assert!(c.options.contains(&("x0".into(), "0.5,1".into())));
    }

    #[test]
    fn errors_name_the_field() {
        let e = parse_config("[params]\nr0 = \"high\"\n").unwrap_err().to_string();
        assert!(e.contains("params.r0"), "{e}");
        let e = parse_config("x0 = [[1]]\n").unwrap_err().to_string();
        assert!(e.contains("x0[0]"), "{e}");
        let e = parse_param("k=lots").unwrap_err().to_string();
        assert!(e.contains("params.k"), "{e}");
    }

    #[test]
    fn param_pairs() {
        assert_eq!(parse_param(" r0 = 2 ").unwrap(), ("r0".into(), 2.0));
        assert!(parse_param("r0").is_err());
        assert!(parse_param("=1").is_err());
    }
}
