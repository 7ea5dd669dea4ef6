//! Files written for a finished (or cancelled) run.
//!
//! ```text
//! <dir>/config.json  report.json  fusion.json  cscs.json  iterations.csv
//! <dir>/scene.gsb    prior_l<layer>.gap
//! <dir>/renders/<id>.png
//! <dir>/dumps/t<t>/<id>.png
//! ```

use std::path::Path;

use anyhow::Context;
use splatedit_core::optimizer::{Progress, RunConfig, RunOutcome};
use splatedit_core::render;

use crate::scenario::Scenario;
use crate::{export, formats, imageio};

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

pub fn write_run(dir: &Path, cfg: &RunConfig, outcome: &RunOutcome, scenario: &Scenario) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir.join("renders"))?;
    write_json(&dir.join("config.json"), cfg)?;
    write_json(&dir.join("report.json"), &outcome.report)?;
    write_json(&dir.join("fusion.json"), &outcome.report.fusion)?;
    if let Some(sel) = &outcome.report.selection {
        write_json(&dir.join("cscs.json"), &sel.rows)?;
    }
    export::write_iterations(&outcome.report, std::fs::File::create(dir.join("iterations.csv"))?)?;
    formats::save_scene(&outcome.scene, &dir.join("scene.gsb"))?;
    for prior in &outcome.priors {
        formats::save_gap(&prior.scores, &dir.join(format!("prior_l{}.gap", prior.layer)))?;
    }
    for view in &scenario.views {
        let cam = match cfg.render_size {
            Some([w, h]) => view.camera.resized(w, h)?,
            None => view.camera.clone(),
        };
        let (img, _) = render::render_color(&outcome.scene, &cam)?;
        imageio::save_png(&img, &dir.join("renders").join(format!("{}.png", cam.id)))?;
    }
    Ok(())
}

/// Saves each view's current render under `dumps/t<t>/`.
pub fn dump_progress(dir: &Path, progress: &Progress<'_>) -> anyhow::Result<()> {
    let out = dir.join("dumps").join(format!("t{:04}", progress.log.t));
    std::fs::create_dir_all(&out)?;
    for v in progress.views {
        imageio::save_png(&v.render, &out.join(format!("{}.png", v.view_id)))?;
    }
    Ok(())
}
