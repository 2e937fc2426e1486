use std::fmt::Write as _;
use std::sync::Arc;

use super::{CharEstimate, ContextDoc, PromptError, PromptExample, TokenBudget, TokenCounter};

pub const HEADER_COT: &str = include_str!("../../templates/aggregation_header_cot.v1.txt");
pub const HEADER_PLAIN: &str = include_str!("../../templates/aggregation_header_plain.v1.txt");

pub const AGGREGATION_MAX_TOKENS: usize = 512;
pub const AGGREGATION_STOP: &[&str] = &["\n\nExample"];

/// Knobs for [`build_aggregation_prompt`].
#[derive(Clone)]
pub struct PromptOptions {
    pub budget: TokenBudget,
    /// Upper bound on tokens per context passage once truncation kicks in.
    pub passage_cap_tokens: usize,
    pub counter: Arc<dyn TokenCounter>,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self { budget: TokenBudget::default(), passage_cap_tokens: 300, counter: Arc::new(CharEstimate) }
    }
}

impl std::fmt::Debug for PromptOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PromptOptions")
            .field("budget", &self.budget)
            .field("passage_cap_tokens", &self.passage_cap_tokens)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltPrompt {
    pub text: String,
    /// Number of leading target contexts that made it into the prompt.
    pub contexts_used: usize,
    /// Indices into the example slice, in prompt order.
    pub examples_used: Vec<usize>,
    pub passages_truncated: bool,
    pub tokens: usize,
}

/// Numbered context documents separated by blank lines.
pub fn render_context_block(contexts: &[ContextDoc]) -> String {
    let mut out = String::new();
    for (i, doc) in contexts.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        let _ = write!(out, "[Document {}]: Title: {}. Content: {}", i + 1, doc.title, doc.text);
    }
    out
}

fn render(header: &str, examples: &[&PromptExample], contexts: &[ContextDoc], question: &str, cot: bool) -> String {
    let mut out = String::with_capacity(4096);
    out.push_str(header.trim_end());
    out.push_str("\n\n");
    for (i, ex) in examples.iter().enumerate() {
        let _ = write!(out, "Example {}:\n\n", i + 1);
        if !ex.contexts.is_empty() {
            out.push_str(&render_context_block(&ex.contexts));
            out.push_str("\n\n");
        }
        let _ = write!(out, "Question: {}\n\n", ex.question.trim());
        if cot {
            let _ = write!(out, "Evidence: {}\n\n", ex.evidence.trim());
        }
        let _ = write!(out, "Answer: {}\n\n", ex.answer.trim());
    }
    let _ = write!(out, "Example {}:\n\n", examples.len() + 1);
    out.push_str(&render_context_block(contexts));
    let _ = write!(out, "\n\nQuestion: {}\n\n", question.trim());
    out.push_str(if cot { "Evidence:" } else { "Answer:" });
    out
}

fn truncate_to_tokens(text: &str, cap: usize, counter: &dyn TokenCounter) -> String {
    if counter.count(text) <= cap {
        return text.to_string();
    }
    let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len())).collect();
    let (mut lo, mut hi) = (0usize, bounds.len() - 1);
    while lo < hi {
        let mid = (lo + hi + 1) / 2;
        if counter.count(&text[..bounds[mid]]) <= cap {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    text[..bounds[lo]].trim_end().to_string()
}

fn truncate_docs(docs: &[ContextDoc], cap: usize, counter: &dyn TokenCounter) -> (Vec<ContextDoc>, bool) {
    let mut changed = false;
    let out = docs
        .iter()
        .map(|d| {
            let text = truncate_to_tokens(&d.text, cap, counter);
            changed |= text.len() != d.text.len();
            ContextDoc { title: d.title.clone(), text }
        })
        .collect();
    (out, changed)
}

/// Assembles the few-shot aggregation prompt.
///
/// `examples` are in prompt order with the most similar last; `contexts` are
/// ranked best first. When the prompt exceeds the budget, passages are cut to
/// `passage_cap_tokens`, then the lowest-ranked contexts are dropped down to
/// one, then examples are dropped starting from the front.
pub fn build_aggregation_prompt(
    examples: &[PromptExample],
    contexts: &[ContextDoc],
    question: &str,
    cot: bool,
    options: &PromptOptions,
) -> Result<BuiltPrompt, PromptError> {
    if contexts.is_empty() {
        return Err(PromptError::NoContexts);
    }
    options.budget.validate()?;
    for (index, ex) in examples.iter().enumerate() {
        if ex.answer.trim().is_empty() {
            return Err(PromptError::InvalidExample { index, message: "empty answer".into() });
        }
        if cot && ex.evidence.trim().is_empty() {
            return Err(PromptError::InvalidExample { index, message: "chain-of-thought example without evidence".into() });
        }
    }
    let header = if cot { HEADER_COT } else { HEADER_PLAIN };
    let counter = options.counter.as_ref();
    let available = options.budget.prompt_tokens();

    let mut kept: Vec<usize> = (0..examples.len()).collect();
    let mut example_docs: Vec<PromptExample> = examples.to_vec();
    let mut target: Vec<ContextDoc> = contexts.to_vec();
    let mut truncated = false;

    let attempt = |kept: &[usize], example_docs: &[PromptExample], target: &[ContextDoc]| {
        let chosen: Vec<&PromptExample> = kept.iter().map(|&i| &example_docs[i]).collect();
        let text = render(header, &chosen, target, question, cot);
        let tokens = counter.count(&text);
        (text, tokens)
    };

    let (mut text, mut tokens) = attempt(&kept, &example_docs, &target);
    if tokens > available {
        let cap = options.passage_cap_tokens;
        let (t, changed) = truncate_docs(&target, cap, counter);
        target = t;
        truncated |= changed;
        for ex in &mut example_docs {
            let (t, changed) = truncate_docs(&ex.contexts, cap, counter);
            ex.contexts = t;
            truncated |= changed;
        }
        (text, tokens) = attempt(&kept, &example_docs, &target);
    }
    while tokens > available && target.len() > 1 {
        target.pop();
        (text, tokens) = attempt(&kept, &example_docs, &target);
    }
    while tokens > available && !kept.is_empty() {
        kept.remove(0);
        (text, tokens) = attempt(&kept, &example_docs, &target);
    }
    if tokens > available {
        return Err(PromptError::BudgetUnsatisfiable { needed: tokens, available });
    }
    Ok(BuiltPrompt { text, contexts_used: target.len(), examples_used: kept, passages_truncated: truncated, tokens })
}

/// Splits a completion into (evidence, answer).
///
/// The answer is the first line after the last `Answer:` marker. In
/// chain-of-thought mode the evidence is everything before that marker; a
/// completion without the marker cannot be parsed. Without chain of thought a
/// bare completion is taken as the answer.
pub fn parse_aggregation_output(completion: &str, cot: bool) -> Result<(String, String), PromptError> {
    let (evidence, answer_part) = match completion.rfind("Answer:") {
        Some(pos) => (&completion[..pos], &completion[pos + "Answer:".len()..]),
        None if cot => return Err(PromptError::MissingAnswer),
        None => ("", completion),
    };
    let answer = answer_part.trim().lines().next().unwrap_or("").trim().to_string();
    if answer.is_empty() {
        return Err(PromptError::EmptyAnswer);
    }
    let evidence = if cot {
        let e = evidence.trim();
        e.strip_prefix("Evidence:").unwrap_or(e).trim().to_string()
    } else {
        String::new()
    };
    Ok((evidence, answer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example(id: &str, evidence: &str) -> PromptExample {
        PromptExample {
            id: id.into(),
            contexts: vec![ContextDoc::new(format!("Title {id}"), format!("Body of {id}."))],
            question: format!("Question {id}?"),
            evidence: evidence.into(),
            answer: format!("answer {id}"),
            embedding: None,
        }
    }

    fn opts(limit: usize, reserved: usize) -> PromptOptions {
        PromptOptions { budget: TokenBudget::new(limit, reserved).unwrap(), ..PromptOptions::default() }
    }

    #[test]
    fn context_block_format() {
        let block = render_context_block(&[ContextDoc::new("A", "x."), ContextDoc::new("B", "y.")]);
        assert_eq!(block, "[Document 1]: Title: A. Content: x.\n\n[Document 2]: Title: B. Content: y.");
    }

    #[test]
    fn layout_with_and_without_cot() {
        let exs = [example("1", "Because [Document 1].")];
        let ctx = [ContextDoc::new("T", "t.")];
        let p = build_aggregation_prompt(&exs, &ctx, "Q?", true, &PromptOptions::default()).unwrap();
        assert!(p.text.starts_with(HEADER_COT.trim_end()));
        assert!(p.text.contains("Example 1:\n\n[Document 1]: Title: Title 1. Content: Body of 1.\n\nQuestion: Question 1?\n\nEvidence: Because [Document 1].\n\nAnswer: answer 1\n\nExample 2:"));
        assert!(p.text.ends_with("Question: Q?\n\nEvidence:"));
        let p = build_aggregation_prompt(&exs, &ctx, "Q?", false, &PromptOptions::default()).unwrap();
        assert!(!p.text.contains("Evidence:"));
        assert!(p.text.ends_with("Question: Q?\n\nAnswer:"));
        assert!(!p.passages_truncated);
    }

    #[test]
    fn cot_requires_evidence() {
        let exs = [example("1", "")];
        let ctx = [ContextDoc::new("T", "t.")];
        assert!(matches!(
            build_aggregation_prompt(&exs, &ctx, "Q?", true, &PromptOptions::default()),
            Err(PromptError::InvalidExample { index: 0, .. })
        ));
        assert!(build_aggregation_prompt(&exs, &ctx, "Q?", false, &PromptOptions::default()).is_ok());
        assert!(matches!(
            build_aggregation_prompt(&exs, &[], "Q?", false, &PromptOptions::default()),
            Err(PromptError::NoContexts)
        ));
    }

    #[test]
    fn ladder_drops_contexts_then_front_examples() {
        let exs: Vec<_> = (0..3).map(|i| example(&i.to_string(), "e")).collect();
        let ctx: Vec<_> = (0..5).map(|i| ContextDoc::new(format!("C{i}"), "w ".repeat(200))).collect();
        let full = build_aggregation_prompt(&exs, &ctx, "Q?", false, &PromptOptions::default()).unwrap();
        assert_eq!(full.contexts_used, 5);
        let tight = build_aggregation_prompt(&exs, &ctx, "Q?", false, &opts(full.tokens - 50 + 10, 10)).unwrap();
        assert!(tight.tokens <= full.tokens - 50);
        assert_eq!(tight.examples_used, vec![0, 1, 2]);
        assert!(tight.contexts_used < 5);
        assert!(tight.text.contains("Title: C0."));

        let one_ctx = build_aggregation_prompt(&exs, &ctx[..1], "Q?", false, &PromptOptions::default()).unwrap();
        let limit = one_ctx.tokens - 5;
        let squeezed = build_aggregation_prompt(&exs, &ctx, "Q?", false, &opts(limit + 10, 10)).unwrap();
        assert_eq!(squeezed.contexts_used, 1);
        assert_eq!(squeezed.examples_used.last(), Some(&2));
        assert!(squeezed.examples_used.len() < 3);
    }

    #[test]
    fn truncates_long_passages_first() {
        let ctx = [ContextDoc::new("Long", "word ".repeat(2000)), ContextDoc::new("Short", "s.")];
        let p = build_aggregation_prompt(&[], &ctx, "Q?", false, &opts(1200, 100)).unwrap();
        assert!(p.passages_truncated);
        assert_eq!(p.contexts_used, 2);
        assert!(p.tokens <= 1100);
    }

    #[test]
    fn unsatisfiable_budget_errors() {
        let ctx = [ContextDoc::new("T", "t.")];
        let o = PromptOptions { passage_cap_tokens: 1, ..opts(30, 10) };
        assert!(matches!(
            build_aggregation_prompt(&[], &ctx, "Q?", true, &o),
            Err(PromptError::BudgetUnsatisfiable { .. })
        ));
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        let s = "\u{e9}".repeat(41);
        let t = truncate_to_tokens(&s, 10, &CharEstimate);
        assert_eq!(t.chars().count(), 40);
    }

    #[test]
    fn parse_cot_output() {
        let (e, a) = parse_aggregation_output(" According to [Document 2], it rains.\n\nAnswer: Paris\nExtra", true).unwrap();
        assert_eq!(e, "According to [Document 2], it rains.");
        assert_eq!(a, "Paris");
        let (e, _) = parse_aggregation_output("Evidence: x\nAnswer: y", true).unwrap();
        assert_eq!(e, "x");
        let (_, a) = parse_aggregation_output("Answer: first\nAnswer: second", true).unwrap();
        assert_eq!(a, "second");
        assert!(matches!(parse_aggregation_output("no marker", true), Err(PromptError::MissingAnswer)));
        assert!(matches!(parse_aggregation_output("e\nAnswer:   ", true), Err(PromptError::EmptyAnswer)));
    }

    #[test]
    fn parse_plain_output() {
        assert_eq!(parse_aggregation_output("  yes\n", false).unwrap(), (String::new(), "yes".into()));
        assert_eq!(parse_aggregation_output("Answer: 5 years", false).unwrap().1, "5 years");
        assert!(parse_aggregation_output("   ", false).is_err());
    }

    proptest! {
        #[test]
        fn built_prompt_fits_budget(
            n_ctx in 1usize..8,
            ctx_len in 1usize..3000,
            n_ex in 0usize..5,
            limit in 600usize..5000,
        ) {
            let exs: Vec<_> = (0..n_ex).map(|i| example(&i.to_string(), "because")).collect();
            let ctx: Vec<_> = (0..n_ctx).map(|i| ContextDoc::new(format!("C{i}"), "z".repeat(ctx_len))).collect();
            let o = opts(limit, 100);
            if let Ok(p) = build_aggregation_prompt(&exs, &ctx, "What?", true, &o) {
                prop_assert!(p.tokens <= limit - 100);
                prop_assert_eq!(p.tokens, CharEstimate.count(&p.text));
                prop_assert!(p.contexts_used >= 1);
                let suffix: Vec<usize> = ((n_ex - p.examples_used.len())..n_ex).collect();
                prop_assert_eq!(p.examples_used, suffix);
            }
        }
    }
}
