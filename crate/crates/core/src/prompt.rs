//! Prompt assembly: golden segment, retrieved skills, instruction, history.
//!
//! Output is plain text with LF newlines and no trailing whitespace, so the
//! same context always renders to the same bytes.

use std::fmt::Write as _;

use crate::skills::{GoldenSegment, Skill};

pub const GOLDEN_HEADER: &str = "## Golden Segment (What to Imitate)";
pub const GOLDEN_DISCLAIMER: &str = "Here is a related action sequence, which may not be fully accurate, but help identify promising directions:";
pub const SKILLS_HEADER: &str = "## Step-wise Reusable Skills (Context-Aware Guidance)";
pub const SKILLS_LEAD: &str = "These skills are relevant to the current context based on your most recent action.";
pub const SKILLS_LEAD_2: &str = "They suggest promising steps to explore the environment:";
pub const INSTRUCTION_HEADER: &str = "## Instruction";
pub const PRECURSORS: &str = "Common precursors:";
pub const NEXT_STEPS: &str = "Typical next steps:";
pub const ACTION_PROMPT: &str = "Action:";
pub const DEFAULT_WINDOW: usize = 20;

/// One past step: the observation the agent saw and the action it took.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryPair {
    pub observation: String,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub task_description: String,
    pub goal: String,
    pub history: Vec<HistoryPair>,
    pub current_observation: String,
    /// `None` omits the golden-segment section.
    pub golden_segment: Option<GoldenSegment>,
    /// `None` omits the skills section entirely; `Some(vec![])` keeps the
    /// header with no skills under it.
    pub skills: Option<Vec<Skill>>,
    pub window: usize,
    pub k: usize,
}

/// Renders one skill block. `index` is 1-based.
pub fn render_skill(skill: &Skill, index: usize, k: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Skill {index}: Centered on action '{}'", skill.center);
    out.push_str(PRECURSORS);
    out.push('\n');
    for n in skill.visible_antecedents().take(k) {
        let _ = writeln!(out, "- {}", n.action);
    }
    out.push_str(NEXT_STEPS);
    out.push('\n');
    for n in skill.visible_consequences().take(k) {
        let _ = writeln!(out, "- {}", n.action);
    }
    out
}

pub fn render_golden_segment(seg: &GoldenSegment) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Goal: {}", seg.goal);
    let _ = writeln!(out, "{}", seg.initial_observation);
    for a in &seg.actions {
        let _ = writeln!(out, "ACTION: {a}");
    }
    out
}

pub fn render_history(history: &[HistoryPair], current: &str, window: usize) -> String {
    let start = history.len().saturating_sub(window.max(1));
    let mut out = String::new();
    for pair in &history[start..] {
        let _ = writeln!(out, "OBSERVATION: {}", pair.observation);
        let _ = writeln!(out, "ACTION: {}", pair.action);
    }
    let _ = writeln!(out, "OBSERVATION: {current}");
    out
}

pub fn render_prompt(ctx: &PromptContext) -> String {
    let mut out = String::new();
    out.push_str(ctx.task_description.trim_end());
    out.push_str("\n\n");

    if let Some(seg) = &ctx.golden_segment {
        let _ = write!(out, "{GOLDEN_HEADER}\n\n{GOLDEN_DISCLAIMER}\n\n");
        out.push_str(&render_golden_segment(seg));
        out.push('\n');
    }

    if let Some(skills) = &ctx.skills {
        let _ = write!(out, "{SKILLS_HEADER}\n\n{SKILLS_LEAD}\n\n{SKILLS_LEAD_2}\n");
        for (i, skill) in skills.iter().enumerate() {
            out.push_str(&render_skill(skill, i + 1, ctx.k));
        }
        out.push('\n');
    }

    let _ = write!(
        out,
        "{INSTRUCTION_HEADER}\n\n\
         You should use the following commands for help when your action cannot be understood: check valid actions.\n\n\
         You should use the following commands for help when your action cannot be understood: inventory.\n\n\
         Generate the next best action to reach the goal.\n\n"
    );
    let _ = write!(out, "Goal: {}\n\n", ctx.goal);
    out.push_str(&render_history(&ctx.history, &ctx.current_observation, ctx.window));
    out.push('\n');
    out.push_str(ACTION_PROMPT);
    out.push('\n');
    out
}

/// Pulls the "Typical next steps" bullets back out of a rendered prompt, in
/// the order they appear.
pub fn parse_next_steps(prompt: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut inside = false;
    for line in prompt.lines() {
        if line == NEXT_STEPS {
            inside = true;
        } else if inside {
            match line.strip_prefix("- ") {
                Some(item) => out.push(item.to_string()),
                None => inside = false,
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skills::Neighbor;

    fn n(action: &str, credit: f64) -> Neighbor {
        Neighbor { action: action.into(), credit, sentinel: false }
    }

    fn desk_skill() -> Skill {
        Skill {
            center: "go to desk".into(),
            antecedents: vec![n("check valid actions", 0.3)],
            consequences: vec![n("use desklamp", 0.4)],
        }
    }

    fn ctx(history: usize) -> PromptContext {
        PromptContext {
            task_description: "Interact with a household to solve a task.".into(),
            goal: "examine the alarmclock with the desklamp".into(),
            history: (1..=history)
                .map(|i| HistoryPair { observation: format!("obs {i}"), action: format!("act {i}") })
                .collect(),
            current_observation: "now".into(),
            golden_segment: Some(GoldenSegment {
                domain: "d".into(),
                goal: "examine the alarmclock with the desklamp".into(),
                initial_observation: "You are in the middle of a room.".into(),
                actions: vec!["go to desk 1".into(), "use desklamp 1".into()],
                total_progress: 1.0,
            }),
            skills: Some(vec![desk_skill()]),
            window: DEFAULT_WINDOW,
            k: 1,
        }
    }

    #[test]
    fn skill_block() {
        assert_eq!(
            render_skill(&desk_skill(), 1, 1),
            "Skill 1: Centered on action 'go to desk'\nCommon precursors:\n- check valid actions\nTypical next steps:\n- use desklamp\n"
        );
    }

    #[test]
    fn skill_k_caps_and_empty_sections() {
        let s = Skill {
            center: "x".into(),
            antecedents: vec![n("a", 0.5), n("b", 0.3), n("c", 0.1)],
            consequences: vec![],
        };
        let text = render_skill(&s, 2, 1);
        assert_eq!(text, "Skill 2: Centered on action 'x'\nCommon precursors:\n- a\nTypical next steps:\n");
    }

    #[test]
    fn sentinels_not_rendered() {
        let s = Skill {
            center: "x".into(),
            antecedents: vec![Neighbor { action: "the beginning of the task".into(), credit: 0.9, sentinel: true }],
            consequences: vec![Neighbor { action: "the end of the task".into(), credit: 0.9, sentinel: true }, n("y", 0.1)],
        };
        assert_eq!(
            render_skill(&s, 1, 1),
            "Skill 1: Centered on action 'x'\nCommon precursors:\nTypical next steps:\n- y\n"
        );
    }

    #[test]
    fn sections_in_order() {
        let p = render_prompt(&ctx(0));
        let pos = |needle: &str| p.find(needle).unwrap_or_else(|| panic!("missing {needle}"));
        let order = [GOLDEN_HEADER, SKILLS_HEADER, INSTRUCTION_HEADER, "OBSERVATION: now"];
        for w in order.windows(2) {
            assert!(pos(w[0]) < pos(w[1]), "{} before {}", w[0], w[1]);
        }
        let goal = p.rfind("Goal: ").unwrap();
        assert!(pos(INSTRUCTION_HEADER) < goal && goal < pos("OBSERVATION: now"));
        assert!(p.ends_with("Action:\n"));
        assert!(!p.contains('\r'));
        assert!(p.lines().all(|l| l == l.trim_end()));
    }

    #[test]
    fn window_truncates_history() {
        let p = render_prompt(&PromptContext { window: 2, ..ctx(5) });
        assert!(!p.contains("act 3"));
        assert!(p.contains("OBSERVATION: obs 4\nACTION: act 4\nOBSERVATION: obs 5\nACTION: act 5\nOBSERVATION: now\n"));
    }

    #[test]
    fn adding_history_keeps_sections() {
        let short = render_prompt(&ctx(1));
        let long = render_prompt(&ctx(2));
        for header in [GOLDEN_HEADER, SKILLS_HEADER, INSTRUCTION_HEADER] {
            assert!(short.contains(header) && long.contains(header));
        }
        assert!(long.len() > short.len());
    }

    #[test]
    fn stripped_sections() {
        let p = render_prompt(&PromptContext { skills: None, golden_segment: None, ..ctx(1) });
        assert!(!p.contains(SKILLS_HEADER));
        assert!(!p.contains(GOLDEN_HEADER));
        assert!(parse_next_steps(&p).is_empty());
    }

    #[test]
    fn next_steps_round_trip() {
        let mut c = ctx(0);
        c.k = 3;
        c.skills = Some(vec![
            desk_skill(),
            Skill { center: "b".into(), antecedents: vec![], consequences: vec![n("p", 0.2), n("q", 0.1)] },
        ]);
        assert_eq!(parse_next_steps(&render_prompt(&c)), vec!["use desklamp", "p", "q"]);
    }
}
