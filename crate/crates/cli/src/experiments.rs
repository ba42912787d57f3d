//! Dispatch from an [`ExperimentConfig`] to the core drivers, producing a
//! report plus artifact files.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use chiplink_core::experiments as core_experiments;
use chiplink_core::operator::ops;
use chiplink_core::protocol::{InputSpec, Shots, TrialSetup};
use chiplink_core::state::{fidelity_to_pure, PureState};
use chiplink_core::tomography::{
    bootstrap_error, bootstrap_error_multi, exact_state_counts, fidelity_process,
    pauli_labels, reconstruct_process, reconstruct_state, sampled_state_counts, settings,
    ChiMatrix, Letter, StateCounts,
};
use chiplink_net::audit::audit_wire_log;
use chiplink_net::coordinator::audit_backplane_log;
use chiplink_net::SessionConfig;

use crate::config::{preset, Experiment, ExperimentConfig};
use crate::report::{ArtifactWriter, Metric, Report};

const BOOTSTRAP_STATE_RESAMPLES: usize = 200;
const BOOTSTRAP_PROCESS_RESAMPLES: usize = 30;

/// Run one configured experiment, writing `report.json` and artifacts
/// under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<Report> {
    config.validate()?;
    let noise = config.resolve_noise()?;
    let comp = config.compensator();
    let writer = ArtifactWriter::new(out_dir)?;
    let mut report = Report::new(config.experiment.name(), config, config.seed, config.shots)?;
    if let Some(name) = &config.preset {
        let p = preset(name)?;
        report.note(format!("noise preset '{}': {}", name, p.provenance.note));
    }

    match config.experiment {
        Experiment::BellDistribute => {
            let pair = core_experiments::distributed_pair(&noise, &comp)?;
            let counts = match config.shots {
                Shots::Exact => exact_state_counts(&pair),
                Shots::N(n) => sampled_state_counts(&pair, n, config.seed),
            };
            let recon = reconstruct_state(&counts)?;
            let target = chiplink_core::protocol::source_pair();
            let fidelity = fidelity_to_pure(&recon.rho, &target)?;
            let metric = match config.shots {
                Shots::Exact => Metric::point(fidelity),
                Shots::N(_) => {
                    let (point, std) = bootstrap_error(
                        &counts,
                        |c| {
                            reconstruct_state(c)
                                .ok()
                                .map(|r| fidelity_to_pure(&r.rho, &target).unwrap_or(0.0))
                                .unwrap_or(0.0)
                        },
                        BOOTSTRAP_STATE_RESAMPLES,
                        config.seed,
                    );
                    Metric::with_std(point, std)
                }
            };
            report.metric("fidelity", metric);
            report.metric(
                "pre_projection_min_eigenvalue",
                Metric::point(recon.pre_projection_min_eigenvalue),
            );
            writer.write_matrix(&mut report, "rho", recon.rho.matrix(), None)?;
            writer.write_counts(&mut report, &[("pair".into(), &counts)])?;
        }

        Experiment::Visibility => {
            let (scans, mean) = core_experiments::fringe_visibility(
                &noise,
                &comp,
                12,
                config.shots,
                config.seed,
            )?;
            report.metric("visibility", Metric::point(mean));
            let mut csv = String::from("scan,phi,counts\n");
            for scan in &scans {
                let name = format!("{:?}", scan.fixed_basis).to_lowercase();
                report.metric(&format!("visibility_{name}"), Metric::point(scan.visibility));
                for (phi, c) in &scan.points {
                    csv.push_str(&format!("{name},{phi:.12e},{c:.12e}\n"));
                }
            }
            writer.write_named(&mut report, "fringes", "fringes.csv", &csv)?;
        }

        Experiment::TruthTable => {
            let table = core_experiments::truth_table(
                &noise,
                &comp,
                config.mode,
                config.shots,
                config.seed,
            )?;
            report.metric("fidelity", Metric::point(table.fidelity));
            let mut csv = String::from("input,p00,p01,p10,p11\n");
            for (row, label) in ["00", "01", "10", "11"].iter().enumerate() {
                csv.push_str(&format!(
                    "{label},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                    table.matrix[row][0], table.matrix[row][1], table.matrix[row][2],
                    table.matrix[row][3]
                ));
            }
            writer.write_named(&mut report, "truth_table", "truth_table.csv", &csv)?;
        }

        Experiment::Entangle => {
            let run = core_experiments::entangling_run(
                &noise,
                &comp,
                config.mode,
                config.shots,
                config.seed,
            )?;
            let names = ["phi_plus", "phi_minus", "psi_plus", "psi_minus"];
            let targets = core_experiments::entangling_targets();
            let mut tables = Vec::new();
            for (k, name) in names.iter().enumerate() {
                let metric = match config.shots {
                    Shots::Exact => Metric::point(run.fidelities[k]),
                    Shots::N(_) => {
                        let target = targets[k].clone();
                        let (point, std) = bootstrap_error(
                            &run.counts[k],
                            move |c| {
                                reconstruct_state(c)
                                    .ok()
                                    .map(|r| fidelity_to_pure(&r.rho, &target).unwrap_or(0.0))
                                    .unwrap_or(0.0)
                            },
                            BOOTSTRAP_STATE_RESAMPLES,
                            config.seed.wrapping_add(k as u64),
                        );
                        Metric::with_std(point, std)
                    }
                };
                report.metric(&format!("fidelity_{name}"), metric);
                writer.write_matrix(
                    &mut report,
                    &format!("rho_{name}"),
                    run.reconstructions[k].rho.matrix(),
                    None,
                )?;
                tables.push(((*name).to_string(), &run.counts[k]));
            }
            report.metric("mean_fidelity", Metric::point(run.mean_fidelity));
            let table_refs: Vec<(String, &StateCounts)> =
                tables.iter().map(|(n, c)| (n.clone(), *c)).collect();
            writer.write_counts(&mut report, &table_refs)?;
        }

        Experiment::StateTomo => {
            let input = config.input.clone().ok_or_else(|| anyhow!("state-tomo needs an input"))?;
            let setup = TrialSetup {
                input: input.clone(),
                noise: noise.clone(),
                compensator: comp,
                mode: config.mode,
            };
            let counts = core_experiments::output_state_counts(&setup, config.shots, config.seed)?;
            let recon = reconstruct_state(&counts)?;
            let target: PureState =
                input.to_state()?.apply(&ops::cnot(), &[1, 4]).map_err(|e| anyhow!(e))?;
            let fidelity = fidelity_to_pure(&recon.rho, &target)?;
            let metric = match config.shots {
                Shots::Exact => Metric::point(fidelity),
                Shots::N(_) => {
                    let target = target.clone();
                    let (point, std) = bootstrap_error(
                        &counts,
                        move |c| {
                            reconstruct_state(c)
                                .ok()
                                .map(|r| fidelity_to_pure(&r.rho, &target).unwrap_or(0.0))
                                .unwrap_or(0.0)
                        },
                        BOOTSTRAP_STATE_RESAMPLES,
                        config.seed,
                    );
                    Metric::with_std(point, std)
                }
            };
            report.metric("fidelity", metric);
            report.metric(
                "pre_projection_min_eigenvalue",
                Metric::point(recon.pre_projection_min_eigenvalue),
            );
            writer.write_matrix(&mut report, "rho", recon.rho.matrix(), None)?;
            writer.write_counts(&mut report, &[("output".into(), &counts)])?;
        }

        Experiment::ProcessTomo => {
            let run = core_experiments::process_tomography_run(
                &noise,
                &comp,
                config.mode,
                config.shots,
                config.seed,
            )?;
            let metric = match config.shots {
                Shots::Exact => Metric::point(run.fidelity),
                Shots::N(_) => {
                    let inputs = settings();
                    let (point, std) = bootstrap_error_multi(
                        &run.counts,
                        |tables| {
                            let fixed: [StateCounts; 16] = tables.to_vec().try_into().unwrap();
                            reconstruct_process(&inputs, &fixed)
                                .ok()
                                .map(|r| {
                                    fidelity_process(&r.chi, &ChiMatrix::ideal_cnot())
                                        .unwrap_or(0.0)
                                })
                                .unwrap_or(0.0)
                        },
                        BOOTSTRAP_PROCESS_RESAMPLES,
                        config.seed,
                    );
                    Metric::with_std(point, std)
                }
            };
            report.metric("process_fidelity", metric);
            report.metric("tp_deviation", Metric::point(run.reconstruction.tp_deviation));
            report.metric(
                "pre_projection_min_eigenvalue",
                Metric::point(run.reconstruction.pre_projection_min_eigenvalue),
            );
            report.note(
                "chi is trace-normalized in the sigma(x)sigma/2 basis; chi_raw satisfies \
                 the process equation exactly (chi_raw/4 matches the unnormalized-basis \
                 display convention)",
            );
            let labels: Vec<String> = pauli_labels().to_vec();
            writer.write_matrix(
                &mut report,
                "chi",
                run.reconstruction.chi.matrix(),
                Some(&labels),
            )?;
            writer.write_matrix(&mut report, "chi_raw", &run.reconstruction.chi_raw, Some(&labels))?;
            let tables: Vec<(String, &StateCounts)> = settings()
                .iter()
                .zip(run.counts.iter())
                .map(|(s, c)| (chiplink_core::tomography::setting_token(*s), c))
                .collect();
            writer.write_counts(&mut report, &tables)?;
        }

        Experiment::CalibrateFiber => {
            let budget = config.calibration_budget.unwrap_or(2000);
            let outcome =
                chiplink_core::channel::calibrate_compensator(&noise, budget, config.seed);
            let calibration = match &outcome {
                Ok(r) => r.clone(),
                Err((_, r)) => r.clone(),
            };
            report.metric("evaluations", Metric::point(calibration.evaluations as f64));
            report.metric("converged", Metric::point(if calibration.converged { 1.0 } else { 0.0 }));
            match calibration.worst_isolation {
                Some(iso) => {
                    report.metric("worst_isolation", Metric::point(iso));
                }
                None => {
                    report.note("worst isolation unbounded: minimum probe outcome is zero");
                }
            }
            if !calibration.converged {
                report.note("calibration failed to reach the isolation threshold; best-found setting reported");
            }
            writer.write_named(
                &mut report,
                "calibration",
                "calibration.json",
                &format!("{}\n", serde_json::to_string_pretty(&calibration)?),
            )?;
        }

        Experiment::NetlabSession => {
            let trials = config.trials.ok_or_else(|| anyhow!("netlab-session needs trials"))?;
            let session = SessionConfig {
                input: config
                    .input
                    .clone()
                    .unwrap_or(InputSpec::alphabet(Letter::Plus, Letter::Zero)),
                mode: config.mode,
                noise: noise.clone(),
                compensator: comp,
                setting: config.setting.clone().unwrap_or_else(|| "ZZ".into()),
                trials,
                seed: config.seed,
                fail_b_after_trials: None,
                latency_ms: None,
            };
            let outcome = chiplink_net::run_session(&session)?;
            let paths = chiplink_net::write_session_outputs(&outcome, &out_dir.join("session"))?;
            let audit = audit_wire_log(
                outcome.wire_log.iter().map(|s| s.as_str()),
                config.mode == chiplink_core::protocol::Mode::Corrected,
            );
            audit_backplane_log(&outcome.backplane_log)
                .context("backplane log failed the classical-only audit")?;
            if !audit.is_clean() {
                bail!("wire log failed the audit: {:?}", audit.violations);
            }
            report.metric("trials_requested", Metric::point(trials as f64));
            report.metric(
                "completed_trials",
                Metric::point(outcome.manifest.completed_trials as f64),
            );
            report.metric("kept_trials", Metric::point(outcome.manifest.kept_trials as f64));
            report.metric("audit_violations", Metric::point(audit.violations.len() as f64));
            for (name, path) in [
                ("session_results", &paths.results),
                ("session_messages", &paths.messages),
                ("session_backplane", &paths.backplane),
                ("session_manifest", &paths.manifest),
            ] {
                report.artifacts.insert(
                    name.into(),
                    path.strip_prefix(out_dir).unwrap_or(path).display().to_string(),
                );
            }
        }
    }

    writer.write_report(&report)?;
    Ok(report)
}
