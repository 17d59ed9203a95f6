use super::context::ContextPassage;
use super::PromptVariant;
use crate::dataset::Query;

pub const STANDARD_INSTRUCTION: &str =
    "Give simple short one phrase answers for the questions based on the context";
pub const RELEVANT_INSTRUCTION: &str = "Give simple short one phrase answers for the questions \
     based on only the parts of the context that are relevant to the question.";

/// Renders the reader prompt:
///
/// ```text
/// Instruction: <instruction>
/// Context: <title>
/// <text>
///
/// <title>
/// <text>
/// Question: <question>
/// Answer:
/// ```
///
/// Passages appear in the given order, separated by a blank line; an empty
/// title is omitted. With no passages the `Context:` line is left out.
pub fn assemble_prompt(
    query: &Query,
    passages: &[ContextPassage],
    variant: PromptVariant,
) -> String {
    let instruction = match variant {
        PromptVariant::Standard => STANDARD_INSTRUCTION,
        PromptVariant::Relevant => RELEVANT_INSTRUCTION,
    };
    let mut prompt = format!("Instruction: {instruction}\n");
    if !passages.is_empty() {
        let blocks: Vec<String> = passages
            .iter()
            .map(|p| {
                if p.title.is_empty() {
                    p.text.clone()
                } else if p.text.is_empty() {
                    p.title.clone()
                } else {
                    format!("{}\n{}", p.title, p.text)
                }
            })
            .collect();
        prompt.push_str("Context: ");
        prompt.push_str(&blocks.join("\n\n"));
        prompt.push('\n');
    }
    prompt.push_str("Question: ");
    prompt.push_str(&query.question);
    prompt.push_str("\nAnswer:");
    prompt
}

#[cfg(test)]
mod tests {
    use super::*;

    fn query() -> Query {
        Query {
            query_id: "q1".into(),
            question: "what is the largest animal?".into(),
            gold_answers: vec!["blue whale".into()],
            gold_passage_ids: vec![],
            gold_doc_ids: vec![],
            multihop: false,
        }
    }

    fn passage(title: &str, text: &str) -> ContextPassage {
        ContextPassage {
            passage_id: "p".into(),
            title: title.into(),
            text: text.into(),
        }
    }

    #[test]
    fn standard_template_is_exact() {
        let prompt = assemble_prompt(
            &query(),
            &[
                passage("Whale", "The blue whale is large."),
                passage("", "Foxes are small."),
            ],
            PromptVariant::Standard,
        );
        assert_eq!(
            prompt,
            "Instruction: Give simple short one phrase answers for the questions based on the context\n\
             Context: Whale\nThe blue whale is large.\n\nFoxes are small.\n\
             Question: what is the largest animal?\n\
             Answer:"
        );
    }

    #[test]
    fn relevant_variant_swaps_instruction() {
        let prompt = assemble_prompt(&query(), &[passage("t", "x")], PromptVariant::Relevant);
        assert!(prompt.contains("only the parts of the context that are relevant to the question"));
        assert!(prompt.starts_with("Instruction: Give simple short one phrase answers"));
    }

    #[test]
    fn no_context_omits_context_line() {
        let prompt = assemble_prompt(&query(), &[], PromptVariant::Standard);
        assert!(!prompt.contains("Context:"));
        assert!(prompt.contains("\nQuestion: what is the largest animal?\nAnswer:"));
    }
}
