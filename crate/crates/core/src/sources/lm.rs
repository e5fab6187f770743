//! Few-shot language-model counts over an OpenAI-style completions API.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ClassSpec, Scope, SubgroupScheme};
use crate::quantity::parse_count;
use crate::sources::http::{send_with_retries, LimitedTransport, Request, Transport};
use crate::sources::{scope_phrase, Answer, SignalSource, SourceConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    pub answer: String,
}

/// Three worked question/answer pairs followed by the target question,
/// decoded greedily with a short answer budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub exemplars: [Exemplar; 3],
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        let ex = |q: &str, a: &str| Exemplar {
            question: q.into(),
            answer: a.into(),
        };
        PromptTemplate {
            exemplars: [
                ex("How many countries are there?", "There are 195 countries in the world."),
                ex(
                    "How many provinces are there in Canada?",
                    "There are 10 provinces in Canada.",
                ),
                ex(
                    "How many species of penguins are there?",
                    "There are about 18 species of penguins.",
                ),
            ],
            model: "gpt-3.5-turbo-instruct".into(),
            temperature: 0.0,
            max_tokens: 15,
        }
    }
}

impl PromptTemplate {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn question(plural: &str, phrase: Option<&str>) -> String {
        match phrase {
            Some(p) => format!("How many {plural} are there in {p}?"),
            None => format!("How many {plural} are there?"),
        }
    }

    pub fn render(&self, question: &str) -> String {
        let mut out = String::new();
        for ex in &self.exemplars {
            out.push_str(&format!("Q: {}\nA: {}\n\n", ex.question, ex.answer));
        }
        out.push_str(&format!("Q: {question}\nA:"));
        out
    }

    /// Cache namespace derived from every field, so an edited prompt never
    /// reuses answers produced by an older one.
    pub fn version(&self) -> String {
        let canonical = serde_json::to_string(self).expect("template serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let hex: String = digest[..4].iter().map(|b| format!("{b:02x}")).collect();
        format!("lm-{hex}")
    }
}

/// First answer line of a completion; the model may run on into a new
/// question.
fn answer_text(completion: &str) -> &str {
    let text = completion.split("\nQ:").next().unwrap_or("");
    text.trim()
}

pub struct LmClient {
    config: SourceConfig,
    template: PromptTemplate,
    transport: LimitedTransport,
}

impl LmClient {
    pub fn new(config: SourceConfig, template: PromptTemplate, transport: Arc<dyn Transport>) -> Self {
        let transport = LimitedTransport::new(transport, config.min_delay());
        LmClient {
            config,
            template,
            transport,
        }
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }
}

impl SignalSource for LmClient {
    fn config(&self) -> &SourceConfig {
        &self.config
    }

    fn fetch(&self, class: &ClassSpec, scope: &Scope, scheme: &SubgroupScheme) -> Result<Answer> {
        let key = self.config.credential()?;
        let question = PromptTemplate::question(&class.label_plural, scope_phrase(scope, scheme)?);
        let prompt = self.template.render(&question);
        let request = Request::PostJson {
            url: self.config.endpoint.clone(),
            body: json!({
                "model": self.template.model,
                "prompt": prompt,
                "temperature": self.template.temperature,
                "max_tokens": self.template.max_tokens,
            }),
        };
        let headers: Vec<(String, String)> = key
            .into_iter()
            .map(|k| ("Authorization".to_string(), format!("Bearer {k}")))
            .collect();
        let resp = send_with_retries(
            &self.transport,
            &request,
            &headers,
            self.config.timeout(),
            self.config.max_retries,
        )?;
        if resp.status == 401 || resp.status == 403 {
            return Err(Error::MissingCredential(
                self.config.credential_env.clone().unwrap_or_default(),
            ));
        }
        if !resp.is_success() {
            return Err(Error::Transport {
                timeout: false,
                message: format!("status {}", resp.status),
            });
        }
        let completion = parse_completion(&resp.body)?;
        Ok(Answer {
            value: parse_count(answer_text(&completion)),
            query: question,
            raw: completion,
        })
    }
}

pub fn parse_completion(body: &str) -> Result<String> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| Error::MalformedResponse {
        source_name: "LM".into(),
        message: e.to_string(),
        body: body.chars().take(2000).collect(),
    })?;
    v.pointer("/choices/0/text")
        .and_then(|t| t.as_str())
        .map(str::to_string)
        .ok_or_else(|| Error::MalformedResponse {
            source_name: "LM".into(),
            message: "no choices[0].text".into(),
            body: body.chars().take(2000).collect(),
        })
}
