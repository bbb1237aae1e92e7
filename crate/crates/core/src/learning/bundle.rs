//! The self-contained model bundle: everything `detect` needs in one
//! versioned text file — mixture bank, cascade thresholds and patch
//! classifier, the average comma template, the 200 weak classifiers, and
//! the AdaBoost stacker.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::learning::{AdaBoostModel, AdaBoostRound, Stump, WeakClassifier};
use crate::logistic::LogisticModel;
use crate::proposals::{CascadeThresholds, PatchClassifier, Template};
use crate::segmentation::GmmBank;

const BUNDLE_FORMAT: &str = "comma-model v1";

/// Trained pipeline state plus all the tunables it was trained with.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub sigma: f64,
    pub thresholds: CascadeThresholds,
    pub displacement: (i32, i32),
    pub span_hours: f64,
    pub nms_iou: f64,
    pub default_p0: f64,
    pub bank: GmmBank,
    pub patch: PatchClassifier,
    pub template: Template,
    /// Ordered segmented-HOG batches 0..n, then motion batches 0..n.
    pub weaks: Vec<WeakClassifier>,
    pub adaboost: AdaBoostModel,
}

impl ModelBundle {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelBundle> {
        ModelBundle::from_text(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(BUNDLE_FORMAT);
        out.push('\n');
        out.push_str(&format!("sigma {:?}\n", self.sigma));
        out.push_str(&format!("mean_min {:?}\n", self.thresholds.mean_min));
        out.push_str(&format!("mean_max {:?}\n", self.thresholds.mean_max));
        out.push_str(&format!("linear_min {:?}\n", self.thresholds.linear_min));
        out.push_str(&format!("gamma_min {:?}\n", self.thresholds.gamma_min));
        out.push_str(&format!("displacement {} {}\n", self.displacement.0, self.displacement.1));
        out.push_str(&format!("span_hours {:?}\n", self.span_hours));
        out.push_str(&format!("nms_iou {:?}\n", self.nms_iou));
        out.push_str(&format!("default_p0 {:?}\n", self.default_p0));

        let bank_text = self.bank.to_text();
        out.push_str(&format!("bank_lines {}\n", bank_text.lines().count()));
        out.push_str(&bank_text);

        out.push_str(&format!("patch_l2 {:?}\n", self.patch.l2));
        out.push_str(&format!("patch_train_accuracy {:?}\n", self.patch.train_accuracy));
        out.push_str(&format!("patch_cv_accuracy {:?}\n", self.patch.cv_accuracy));
        out.push_str(&format!("patch_bias {:?}\n", self.patch.model.bias));
        push_f32_block(&mut out, "patch_weights", &self.patch.model.weights);
        push_f32_block(&mut out, "template", &self.template.values);

        out.push_str(&format!("weaks {}\n", self.weaks.len()));
        for weak in &self.weaks {
            out.push_str(&format!(
                "weak {} {} {:?} {}\n",
                kind_tag(weak.kind),
                weak.batch_id,
                weak.model.bias,
                weak.model.weights.len()
            ));
            push_floats_line(&mut out, &weak.model.weights);
        }

        out.push_str(&format!("adaboost_rounds {}\n", self.adaboost.rounds.len()));
        for round in &self.adaboost.rounds {
            out.push_str(&format!(
                "round {} {:?} {} {:?}\n",
                round.stump.feature, round.stump.threshold, round.stump.polarity, round.alpha
            ));
        }
        push_f64_block(&mut out, "train_errors", &self.adaboost.train_errors);
        push_f64_block(&mut out, "error_bounds", &self.adaboost.error_bounds);
        out
    }

    pub fn from_text(text: &str) -> Result<ModelBundle> {
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("bundle truncated at {what}")))
        };
        let header = next("header")?;
        if header.trim() != BUNDLE_FORMAT {
            return Err(Error::Format(format!(
                "expected bundle header {BUNDLE_FORMAT:?}, got {header:?}"
            )));
        }
        let sigma = keyed_f64(next("sigma")?, "sigma")?;
        let mean_min = keyed_f64(next("mean_min")?, "mean_min")?;
        let mean_max = keyed_f64(next("mean_max")?, "mean_max")?;
        let linear_min = keyed_f64(next("linear_min")?, "linear_min")?;
        let gamma_min = keyed_f64(next("gamma_min")?, "gamma_min")?;
        let disp_line = next("displacement")?;
        let disp: Vec<&str> = disp_line.split_whitespace().collect();
        if disp.len() != 3 || disp[0] != "displacement" {
            return Err(Error::Format(format!("bad displacement line {disp_line:?}")));
        }
        let displacement = (
            disp[1].parse().map_err(|_| Error::Format("bad displacement row".into()))?,
            disp[2].parse().map_err(|_| Error::Format("bad displacement col".into()))?,
        );
        let span_hours = keyed_f64(next("span_hours")?, "span_hours")?;
        let nms_iou = keyed_f64(next("nms_iou")?, "nms_iou")?;
        let default_p0 = keyed_f64(next("default_p0")?, "default_p0")?;

        let bank_lines = keyed_usize(next("bank_lines")?, "bank_lines")?;
        let mut bank_text = String::new();
        for _ in 0..bank_lines {
            bank_text.push_str(next("bank body")?);
            bank_text.push('\n');
        }
        let bank = GmmBank::from_text(&bank_text)?;

        let l2 = keyed_f64(next("patch_l2")?, "patch_l2")?;
        let train_accuracy = keyed_f64(next("patch_train_accuracy")?, "patch_train_accuracy")?;
        let cv_accuracy = keyed_f64(next("patch_cv_accuracy")?, "patch_cv_accuracy")?;
        let patch_bias = keyed_f64(next("patch_bias")?, "patch_bias")? as f32;
        let patch_weights = read_f32_block(&mut next, "patch_weights")?;
        let template_values = read_f32_block(&mut next, "template")?;

        let weak_count = keyed_usize(next("weaks")?, "weaks")?;
        let mut weaks = Vec::with_capacity(weak_count);
        for _ in 0..weak_count {
            let head = next("weak header")?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            if parts.len() != 5 || parts[0] != "weak" {
                return Err(Error::Format(format!("bad weak header {head:?}")));
            }
            let kind = kind_from_tag(parts[1])?;
            let batch_id = parts[2]
                .parse()
                .map_err(|_| Error::Format(format!("bad batch id in {head:?}")))?;
            let bias: f32 = parts[3]
                .parse()
                .map_err(|_| Error::Format(format!("bad weak bias in {head:?}")))?;
            let dim: usize = parts[4]
                .parse()
                .map_err(|_| Error::Format(format!("bad weak dim in {head:?}")))?;
            let weights = parse_f32_line(next("weak weights")?)?;
            if weights.len() != dim {
                return Err(Error::Format("weak weight count mismatch".into()));
            }
            weaks.push(WeakClassifier { kind, batch_id, model: LogisticModel { weights, bias } });
        }

        let round_count = keyed_usize(next("adaboost_rounds")?, "adaboost_rounds")?;
        let mut rounds = Vec::with_capacity(round_count);
        for _ in 0..round_count {
            let line = next("round")?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 5 || parts[0] != "round" {
                return Err(Error::Format(format!("bad round line {line:?}")));
            }
            let parse = |t: &str| -> Result<f64> {
                t.parse().map_err(|_| Error::Format(format!("bad number in {line:?}")))
            };
            rounds.push(AdaBoostRound {
                stump: Stump {
                    feature: parse(parts[1])? as usize,
                    threshold: parse(parts[2])?,
                    polarity: parse(parts[3])? as i8,
                },
                alpha: parse(parts[4])?,
            });
        }
        let train_errors = read_f64_block(&mut next, "train_errors")?;
        let error_bounds = read_f64_block(&mut next, "error_bounds")?;

        Ok(ModelBundle {
            sigma,
            thresholds: CascadeThresholds { mean_min, mean_max, linear_min, gamma_min },
            displacement,
            span_hours,
            nms_iou,
            default_p0,
            bank,
            patch: PatchClassifier {
                model: LogisticModel { weights: patch_weights, bias: patch_bias },
                l2,
                train_accuracy,
                cv_accuracy,
            },
            template: Template::new(template_values),
            weaks,
            adaboost: AdaBoostModel { rounds, train_errors, error_bounds },
        })
    }
}

fn kind_tag(kind: FeatureKind) -> &'static str {
    match kind {
        FeatureKind::SegmentedHog => "hog",
        FeatureKind::MotionHistogram => "motion",
    }
}

fn kind_from_tag(tag: &str) -> Result<FeatureKind> {
    match tag {
        "hog" => Ok(FeatureKind::SegmentedHog),
        "motion" => Ok(FeatureKind::MotionHistogram),
        other => Err(Error::Format(format!("unknown feature kind {other:?}"))),
    }
}

fn push_floats_line(out: &mut String, values: &[f32]) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        out.push_str(&format!("{v:?}"));
        first = false;
    }
    out.push('\n');
}

fn push_f32_block(out: &mut String, name: &str, values: &[f32]) {
    out.push_str(&format!("{name} {}\n", values.len()));
    push_floats_line(out, values);
}

fn push_f64_block(out: &mut String, name: &str, values: &[f64]) {
    out.push_str(&format!("{name} {}\n", values.len()));
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        out.push_str(&format!("{v:?}"));
        first = false;
    }
    out.push('\n');
}

fn keyed_f64(line: &str, key: &str) -> Result<f64> {
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(k), Some(v), None) if k == key => v
            .parse()
            .map_err(|_| Error::Format(format!("bad {key} value {v:?}"))),
        _ => Err(Error::Format(format!("expected `{key} <value>`, got {line:?}"))),
    }
}

fn keyed_usize(line: &str, key: &str) -> Result<usize> {
    Ok(keyed_f64(line, key)? as usize)
}

fn parse_f32_line(line: &str) -> Result<Vec<f32>> {
    line.split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format(format!("bad float {t:?}"))))
        .collect()
}

fn read_f32_block<'a>(
    next: &mut impl FnMut(&str) -> Result<&'a str>,
    name: &str,
) -> Result<Vec<f32>> {
    let count = keyed_usize(next(name)?, name)?;
    let values = parse_f32_line(next(name)?)?;
    if values.len() != count {
        return Err(Error::Format(format!(
            "{name}: expected {count} values, got {}",
            values.len()
        )));
    }
    Ok(values)
}

fn read_f64_block<'a>(
    next: &mut impl FnMut(&str) -> Result<&'a str>,
    name: &str,
) -> Result<Vec<f64>> {
    let count = keyed_usize(next(name)?, name)?;
    let values: Result<Vec<f64>> = next(name)?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format(format!("bad float {t:?}"))))
        .collect();
    let values = values?;
    if values.len() != count {
        return Err(Error::Format(format!(
            "{name}: expected {count} values, got {}",
            values.len()
        )));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::{GmmParams, PixelGroupKey};

    fn tiny_bundle() -> ModelBundle {
        let bank = GmmBank::from_entries(
            1,
            1,
            (0..24).map(|hour| {
                (
                    PixelGroupKey { hour, tile_row: 0, tile_col: 0 },
                    GmmParams::from_parts(vec![0.5, 0.5], vec![220.0, 45.0], vec![30.0, 20.0]),
                )
            }),
        )
        .minmax_filter();
        ModelBundle {
            sigma: 120.0,
            thresholds: CascadeThresholds::default(),
            displacement: (0, -10),
            span_hours: 5.0,
            nms_iou: 0.30,
            default_p0: 0.50,
            bank,
            patch: PatchClassifier {
                model: LogisticModel { weights: vec![0.25, -1.5, 3.25e-4], bias: -0.125 },
                l2: 0.1,
                train_accuracy: 0.975,
                cv_accuracy: f64::NAN,
            },
            template: Template::new(vec![0.0, 0.5, 1.0]),
            weaks: vec![
                WeakClassifier {
                    kind: FeatureKind::SegmentedHog,
                    batch_id: 0,
                    model: LogisticModel { weights: vec![1.0; 324], bias: 0.5 },
                },
                WeakClassifier {
                    kind: FeatureKind::MotionHistogram,
                    batch_id: 0,
                    model: LogisticModel { weights: vec![-0.5; 27], bias: 0.125 },
                },
            ],
            adaboost: AdaBoostModel {
                rounds: vec![AdaBoostRound {
                    stump: Stump { feature: 1, threshold: 0.512345, polarity: -1 },
                    alpha: 0.7512,
                }],
                train_errors: vec![0.25],
                error_bounds: vec![0.5],
            },
        }
    }

    #[test]
    fn bundle_text_roundtrip_is_stable() {
        let bundle = tiny_bundle();
        let text = bundle.to_text();
        let back = ModelBundle::from_text(&text).unwrap();
        // Rewriting reproduces identical bytes: the determinism contract for
        // saved models.
        assert_eq!(text, back.to_text());
        assert_eq!(back.patch.model.weights, bundle.patch.model.weights);
        assert_eq!(back.weaks.len(), 2);
        assert_eq!(back.adaboost.rounds[0].stump.threshold, 0.512345);
        assert!(back.patch.cv_accuracy.is_nan());
        assert_eq!(back.displacement, (0, -10));
    }

    #[test]
    fn save_load_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let bundle = tiny_bundle();
        bundle.save(&path).unwrap();
        let back = ModelBundle::load(&path).unwrap();
        assert_eq!(back.to_text(), bundle.to_text());
    }

    #[test]
    fn corrupted_header_rejected() {
        assert!(matches!(
            ModelBundle::from_text("comma-model v9\n"),
            Err(Error::Format(_))
        ));
    }
}
