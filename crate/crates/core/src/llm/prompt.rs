//! Prompt rendering. The formats here are frozen; golden tests pin them.

use std::fmt::Write;

use crate::optimizer::{SessionContext, Validity};
use crate::space::{ObjectiveSpec, ParameterSpace};

use super::parse::TOOL_NAME;
use super::provider::ChatMessage;

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub system_prompt: String,
    pub iteration_prompt: String,
    pub context_documents: Vec<String>,
}

impl PromptBundle {
    /// System prompt, then the context documents (if any), then the iteration prompt.
    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut out = vec![ChatMessage::system(&self.system_prompt)];
        if let Some(first) = first_user_message(&self.context_documents) {
            out.push(ChatMessage::user(first));
        }
        out.push(ChatMessage::user(&self.iteration_prompt));
        out
    }
}

fn cell(s: &str) -> String {
    s.replace('\\', "\\\\").replace('|', "\\|").replace('\n', "\\n")
}

pub fn system_prompt(space: &ParameterSpace, objectives: &[ObjectiveSpec], batch: usize) -> String {
    let mut s = String::new();
    s.push_str(
        "You are an expert experimentalist guiding an optimization campaign. \
         Each experiment is a combination of categorical parameter values.\n\n",
    );
    s.push_str("## Parameter space\n");
    for p in space.parameters() {
        let _ = writeln!(s, "- {} (categorical, {} options): {}", p.name, p.options.len(), p.options.join(", "));
    }
    s.push_str("\n## Objectives\n");
    for o in objectives {
        let _ = writeln!(s, "- {}: {}", o.name, o.goal);
    }
    let _ = writeln!(
        s,
        "\n## Batch size\nSuggest exactly {batch} parameter combination{} per iteration.",
        if batch == 1 { "" } else { "s" }
    );
    s.push_str(
        "\n## Guidelines\n\
         a. Avoid infeasible experiments: only use the listed options for each parameter.\n\
         b. Minimize the number of experiments needed to reach the optimum.\n\
         c. Avoid suggesting previously tested parameter combinations.\n\
         d. Consider the physical and chemical meaning of the observed data.\n",
    );
    let _ = write!(
        s,
        "\nAlways answer by calling the `{TOOL_NAME}` function with your analysis, hypothesis, reasoning and suggestions."
    );
    s
}

/// Context documents, concatenated into the opening user message.
pub fn first_user_message(docs: &[String]) -> Option<String> {
    if docs.is_empty() {
        return None;
    }
    let mut s = String::from("Background material for this optimization campaign follows.\n");
    for (i, d) in docs.iter().enumerate() {
        let _ = write!(s, "\n--- Document {} ---\n{}\n", i + 1, d);
    }
    Some(s)
}

/// Renders the complete history and the response protocol. `flags` is parallel
/// to `ctx.history`.
pub fn iteration_prompt(ctx: &SessionContext<'_>, flags: &[Validity], count: usize) -> String {
    let done = ctx.history.len();
    let iteration = done / ctx.batch.max(1) + 1;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Iteration {iteration}. Experiments run: {done}. Remaining budget: {}.\n",
        ctx.budget.saturating_sub(done)
    );
    if done == 0 {
        s.push_str("No experiments have been run yet.\n");
    } else {
        s.push_str("Observed experiments (replicate measurements separated by `/`; nan = no result):\n");
        let mut header = vec!["#".to_string()];
        header.extend(ctx.space.parameters().iter().map(|p| cell(&p.name)));
        header.extend(ctx.objectives.iter().map(|o| cell(&o.name)));
        header.push("status".into());
        let _ = writeln!(s, "| {} |", header.join(" | "));
        let _ = writeln!(s, "|{}", "---|".repeat(header.len()));
        for (i, h) in ctx.history.iter().enumerate() {
            let mut row = vec![(i + 1).to_string()];
            row.extend(h.assignment.labels().iter().map(|l| cell(l)));
            for k in 0..ctx.objectives.len() {
                row.push(match h.observation.measurements() {
                    Some(reps) => reps
                        .iter()
                        .map(|m| format!("{:.2}", m[k]))
                        .collect::<Vec<_>>()
                        .join(" / "),
                    None => "nan".into(),
                });
            }
            row.push(
                match flags.get(i).copied().unwrap_or(Validity::Valid) {
                    Validity::Valid => "ok",
                    Validity::InvalidOption => "infeasible: invalid option",
                    Validity::OffTable => "infeasible: not available",
                }
                .into(),
            );
            let _ = writeln!(s, "| {} |", row.join(" | "));
        }
    }
    let _ = write!(
        s,
        "\nRespond by calling `{TOOL_NAME}` and follow this protocol:\n\
         1. Analyze trends in the observed data.\n\
         2. Form a hypothesis about the important factors.\n\
         3. Provide explicit reasoning for the next suggestion.\n\
         4. Recommend a batch of {count} parameter combination{} to test.\n",
        if count == 1 { "" } else { "s" }
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::AggregationPolicy;
    use crate::optimizer::{HistoryEntry, Observation};
    use crate::space::{Assignment, Goal, Parameter};

    fn space() -> ParameterSpace {
        ParameterSpace::new(vec![
            Parameter::new("base", ["K2CO3", "Cs2CO3"]),
            Parameter::new("solvent", ["DMF", "THF", "MeCN"]),
            Parameter::new("ligand", ["L1", "L2"]),
        ])
        .unwrap()
    }

    fn objectives() -> Vec<ObjectiveSpec> {
        vec![
            ObjectiveSpec::new("desired", Goal::Maximize),
            ObjectiveSpec::new("side", Goal::Minimize),
        ]
    }

    fn asg(v: [&str; 3]) -> Assignment {
        Assignment::new(v.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn system_prompt_lists_everything() {
        let p = system_prompt(&space(), &objectives(), 1);
        for needle in ["base", "K2CO3, Cs2CO3", "DMF, THF, MeCN", "L1, L2", "desired: maximize", "side: minimize"] {
            assert!(p.contains(needle), "missing {needle}");
        }
        assert!(p.contains("exactly 1 parameter combination per"));
        assert!(p.contains("Avoid infeasible experiments"));
        assert!(p.contains("Minimize the number of experiments"));
        assert!(p.contains("previously tested"));
        assert!(p.contains("physical and chemical meaning"));
        assert_eq!(p, system_prompt(&space(), &objectives(), 1));
    }

    #[test]
    fn context_goes_to_first_user_message() {
        let b = PromptBundle {
            system_prompt: system_prompt(&space(), &objectives(), 1),
            iteration_prompt: "it".into(),
            context_documents: vec!["FULL PAPER TEXT".into()],
        };
        let m = b.messages();
        assert_eq!(m.len(), 3);
        assert!(!m[0].content.contains("FULL PAPER TEXT"));
        assert_eq!(m[1].role, "user");
        assert!(m[1].content.contains("FULL PAPER TEXT"));
    }

    #[test]
    fn history_table_golden() {
        let s = space();
        let objs = objectives();
        let policy = AggregationPolicy::default();
        let history = vec![
            HistoryEntry {
                assignment: asg(["K2CO3", "DMF", "L1"]),
                observation: Observation::Measured(vec![vec![12.346, 1.0], vec![10.0, 2.5]]),
            },
            HistoryEntry {
                assignment: asg(["K2CO3", "Water", "L1"]),
                observation: Observation::Missing,
            },
            HistoryEntry {
                assignment: asg(["Cs2CO3", "THF", "L2"]),
                observation: Observation::Missing,
            },
        ];
        let ctx = SessionContext {
            space: &s,
            objectives: &objs,
            policy: &policy,
            history: &history,
            budget: 20,
            batch: 1,
        };
        let flags = [Validity::Valid, Validity::InvalidOption, Validity::OffTable];
        let expected = "\
Iteration 4. Experiments run: 3. Remaining budget: 17.

Observed experiments (replicate measurements separated by `/`; nan = no result):
| # | base | solvent | ligand | desired | side | status |
|---|---|---|---|---|---|---|
| 1 | K2CO3 | DMF | L1 | 12.35 / 10.00 | 1.00 / 2.50 | ok |
| 2 | K2CO3 | Water | L1 | nan | nan | infeasible: invalid option |
| 3 | Cs2CO3 | THF | L2 | nan | nan | infeasible: not available |

Respond by calling `suggest_experiments` and follow this protocol:
1. Analyze trends in the observed data.
2. Form a hypothesis about the important factors.
3. Provide explicit reasoning for the next suggestion.
4. Recommend a batch of 1 parameter combination to test.
";
        assert_eq!(iteration_prompt(&ctx, &flags, 1), expected);
    }
}
