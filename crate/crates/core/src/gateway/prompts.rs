//! Prompt assets for every model call the pipeline makes.
//!
//! Placeholders are `{name}` with `name` in `[a-z_]`; any other brace
//! sequence (the JSON example in the extraction prompt) is literal text.
//! Substituted values are inserted verbatim and never re-scanned.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateId {
    Stage1Qa,
    Stage1Summary,
    Stage2Bridge,
    AnswerGen,
    IrcotStep,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        TemplateId::Stage1Qa,
        TemplateId::Stage1Summary,
        TemplateId::Stage2Bridge,
        TemplateId::AnswerGen,
        TemplateId::IrcotStep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::Stage1Qa => "stage1_qa",
            TemplateId::Stage1Summary => "stage1_summary",
            TemplateId::Stage2Bridge => "stage2_bridge",
            TemplateId::AnswerGen => "answer_gen",
            TemplateId::IrcotStep => "ircot_step",
        }
    }

    pub fn body(self) -> &'static str {
        match self {
            TemplateId::Stage1Qa => STAGE1_QA,
            TemplateId::Stage1Summary => STAGE1_SUMMARY,
            TemplateId::Stage2Bridge => STAGE2_BRIDGE,
            TemplateId::AnswerGen => ANSWER_GEN,
            TemplateId::IrcotStep => IRCOT_STEP,
        }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(self) -> Vec<&'static str> {
        let mut names = Vec::new();
        for segment in parse(self.body()) {
            if let Segment::Placeholder(name) = segment {
                if !names.contains(&name) {
                    names.push(name);
                }
            }
        }
        names
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const STAGE1_QA: &str = "\
You are an expert information extractor specializing in converting unstructured documents into clear, atomic question-answer pairs.

Extract ALL factual information from the following document as question-answer pairs. Each pair must answer exactly one question, be self-contained, and be verifiable from the source content. Extract questions for facts, descriptions, properties, relationships, and events. For each entity mentioned, also extract questions about its relationships to other entities.

Document:
{text}

Return only a valid JSON object without any other text.
Use this shape: {\"qa_pairs\": [{\"question\": \"...\", \"answer\": \"...\"}], \"entities\": [\"...\"]}
Write every answer as a complete sentence that names its subject. List every named entity mentioned in the document under \"entities\".";

pub const STAGE1_SUMMARY: &str = "\
Given the following document, write a comprehensive summary that captures all key facts, entities, relationships, and details. Be thorough and do not omit important information.

Document:
{text}

Summary:";

pub const STAGE2_BRIDGE: &str = "\
Given the following information about \"{entity}\" from multiple source documents, generate bridging facts that connect information across these documents.

{doc_sections}

Requirements:
- Each bridging fact must combine information from 2+ documents
- Be factually accurate \u{2014} only connect information that is logically related
- Each fact should be self-contained and understandable without context
- Do not generate speculative connections
- If documents share the entity name but are about unrelated topics, return empty

Return a JSON array of strings. If no meaningful connections exist, return [].";

pub const ANSWER_GEN: &str = "\
You are a precise question answering assistant. Answer with ONLY the exact information requested, with no explanations or extra words. If the answer is a name, give only the name. If the answer is a number, give only the number. If the answer is yes/no, give only yes or no.

Context:
{context}

Question:
{question}";

pub const IRCOT_STEP: &str = "\
You are a reasoning assistant that helps answer multi-hop questions step by step.

Question: {question}

Retrieved Information:
{context}

Reasoning so far:
{cot_so_far}

Write ONE brief reasoning sentence that makes progress toward answering the question. If more information is needed, suggest a specific search query.

Format your response as:
Reasoning: <one sentence of reasoning>
Search: <next search query, or DONE if ready to answer>";

enum Segment<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn parse(body: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let bytes = body.as_bytes();
    let mut literal_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let name_len = bytes[i + 1..]
                .iter()
                .take_while(|b| b.is_ascii_lowercase() || **b == b'_')
                .count();
            let close = i + 1 + name_len;
            if name_len > 0 && bytes.get(close) == Some(&b'}') {
                out.push(Segment::Literal(&body[literal_start..i]));
                out.push(Segment::Placeholder(&body[i + 1..close]));
                i = close + 1;
                literal_start = i;
                continue;
            }
        }
        i += 1;
    }
    out.push(Segment::Literal(&body[literal_start..]));
    out
}

/// Substitutes every placeholder of `template` from `bindings`.
/// Extra bindings are ignored; a missing one is an error naming it.
pub fn render_prompt(template: TemplateId, bindings: &BTreeMap<&str, String>) -> Result<String> {
    render_body(template.name(), template.body(), bindings)
}

fn render_body(
    name: &'static str,
    body: &str,
    bindings: &BTreeMap<&str, String>,
) -> Result<String> {
    let mut out = String::with_capacity(body.len());
    for segment in parse(body) {
        match segment {
            Segment::Literal(text) => out.push_str(text),
            Segment::Placeholder(placeholder) => match bindings.get(placeholder) {
                Some(value) => out.push_str(value),
                None => {
                    return Err(Error::Template {
                        template: name,
                        placeholder: placeholder.to_string(),
                    })
                }
            },
        }
    }
    Ok(out)
}

/// Convenience for building a binding map inline.
pub fn bindings<const N: usize>(
    pairs: [(&'static str, String); N],
) -> BTreeMap<&'static str, String> {
    pairs.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_per_template() {
        assert_eq!(TemplateId::Stage1Qa.placeholders(), ["text"]);
        assert_eq!(TemplateId::Stage1Summary.placeholders(), ["text"]);
        assert_eq!(
            TemplateId::Stage2Bridge.placeholders(),
            ["entity", "doc_sections"]
        );
        assert_eq!(
            TemplateId::AnswerGen.placeholders(),
            ["context", "question"]
        );
        assert_eq!(
            TemplateId::IrcotStep.placeholders(),
            ["question", "context", "cot_so_far"]
        );
    }

    #[test]
    fn bridge_prompt_contains_bindings_verbatim() {
        let sections = "Document 1 (a):\n- Aylwin is directed by Henry Edwards".to_string();
        let prompt = render_prompt(
            TemplateId::Stage2Bridge,
            &bindings([
                ("entity", "Henry Edwards".into()),
                ("doc_sections", sections.clone()),
            ]),
        )
        .unwrap();
        assert!(prompt.contains("\"Henry Edwards\""));
        assert!(prompt.contains(&sections));
        assert!(prompt.contains("If no meaningful connections exist, return []."));
    }

    #[test]
    fn missing_binding_names_the_placeholder() {
        let err = render_prompt(
            TemplateId::AnswerGen,
            &bindings([("context", String::new())]),
        )
        .unwrap_err();
        match err {
            Error::Template {
                template,
                placeholder,
            } => {
                assert_eq!(template, "answer_gen");
                assert_eq!(placeholder, "question");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn placeholder_free_body_is_unchanged() {
        let body = "no placeholders {\"json\": [1]} { } {Upper}";
        assert_eq!(render_body("t", body, &BTreeMap::new()).unwrap(), body);
    }

    #[test]
    fn values_are_not_rescanned() {
        let out = render_prompt(
            TemplateId::AnswerGen,
            &bindings([("context", "{question}".into()), ("question", "Q".into())]),
        )
        .unwrap();
        assert!(out.contains("Context:\n{question}\n"));
    }
}
