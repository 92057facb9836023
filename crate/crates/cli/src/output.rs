use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nlsp_core::evolve::Sample;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub name: String,
    pub path: PathBuf,
}

/// Output directory plus the manifest of everything written into it.
pub struct Output {
    pub dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        let rel = PathBuf::from(name);
        if let Some(parent) = self.dir.join(&rel).parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        self.artifacts.push(Artifact {
            name: name.to_string(),
            path: rel.clone(),
        });
        self.dir.join(rel)
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.text(name, &serde_json::to_string_pretty(value)?)
    }

    pub fn finish<T: Serialize>(mut self, command: &str, config: &T, status: &str, summary: serde_json::Value) -> Result<()> {
        let m = serde_json::json!({
            "command": command,
            "status": status,
            "config": config,
            "summary": summary,
            "artifacts": self.artifacts,
        });
        let p = self.dir.join("manifest.json");
        self.artifacts.clear();
        std::fs::write(&p, serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }
}

pub fn samples_csv(samples: &[Sample]) -> String {
    let mut s = String::from("t,mass,action,l4,grad,k2,d0,energy_norm,d,b_plus,b_minus,b1,zeta_norm,core_h1,virial\n");
    for x in samples {
        let _ = writeln!(
            s,
            "{:.6},{:.15e},{:.15e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
            x.t,
            x.mass,
            x.action,
            x.l4,
            x.grad,
            x.k2,
            x.d0,
            x.energy_norm,
            x.d,
            x.b_plus,
            x.b_minus,
            x.b1,
            x.zeta_norm,
            x.core_h1,
            x.virial
        );
    }
    s
}
