//! The `list-methods` output.

use std::fmt::Write;

use crate::mitigations::{registry, Category, MethodInfo, ParamRange};

fn range_text(r: &ParamRange) -> String {
    match r {
        ParamRange::Real { min, max } if *max >= f64::MAX && *min == f64::MIN_POSITIVE => "> 0".into(),
        ParamRange::Real { min, max } if *max >= f64::MAX => format!(">= {min}"),
        ParamRange::Real { min, max } => format!("[{min}, {max}]"),
        ParamRange::Integer { min, max } if *max >= f64::MAX => format!("integer >= {min}"),
        ParamRange::Integer { min, max } => format!("integer in [{min}, {max}]"),
        ParamRange::OneOf(words) => format!("one of {}", words.join("|")),
    }
}

/// Human-readable listing grouped by category.
pub fn list_methods_text() -> String {
    let methods = registry();
    let mut out = String::new();
    for cat in Category::ALL {
        let _ = writeln!(out, "{}:", cat.name());
        for m in methods.iter().filter(|m| m.category == cat) {
            let _ = writeln!(out, "  {:<22} {}", m.name, m.summary);
            let _ = writeln!(out, "  {:<22} trigger: {} (default {})", "", trigger_words(m), m.default_trigger.label());
            for p in &m.params {
                let _ = writeln!(out, "  {:<22} {} = {}  {}  {}", "", p.name, p.default, range_text(&p.range), p.doc);
            }
            let _ = writeln!(out, "  {:<22} {}", "", m.citation);
        }
    }
    out
}

fn trigger_words(m: &MethodInfo) -> &'static str {
    use crate::mitigations::TriggerClass::*;
    match m.triggers {
        Intervention => "every_k_steps | on_task_switch | once_at | per_gradient_step",
        Scheduled => "every_k_steps | on_task_switch | once_at",
        Loss => "per_gradient_step",
        Structural => "construction",
    }
}

/// The registry as one JSON document: `{"categories": [{"name", "methods": [...]}]}`.
pub fn list_methods_json() -> serde_json::Value {
    let methods = registry();
    let cats: Vec<_> = Category::ALL
        .iter()
        .map(|&cat| {
            let entries: Vec<_> = methods
                .iter()
                .filter(|m| m.category == cat)
                .map(|m| {
                    serde_json::json!({
                        "name": m.name,
                        "category": cat.name(),
                        "params": m.params,
                        "default_trigger": m.default_trigger,
                        "triggers": m.triggers,
                        "citation": m.citation,
                        "summary": m.summary,
                    })
                })
                .collect();
            serde_json::json!({ "name": cat.name(), "methods": entries })
        })
        .collect();
    serde_json::json!({ "categories": cats })
}
