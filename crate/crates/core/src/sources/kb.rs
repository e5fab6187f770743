//! Knowledge-base counts via SPARQL `COUNT` queries against a Wikidata-style
//! endpoint.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{ClassSpec, Domain, Scope, SubgroupScheme};
use crate::sources::http::{send_with_retries, LimitedTransport, Request, Transport};
use crate::sources::{Answer, SignalSource, SourceConfig};

pub const TEMPLATE_VERSION: &str = "kb-v1";

/// Property tying an entity of the domain to a country. Domains without a
/// dependable property get no subgroup signals.
pub fn country_property(domain: Domain) -> Option<&'static str> {
    match domain {
        Domain::GeographicalEntity | Domain::ManMadeObject | Domain::Organization => Some("P17"),
        Domain::Occupation => Some("P27"),
        Domain::Species | Domain::CreativeWork => None,
    }
}

fn membership(domain: Domain, entity: &str, transitive: bool) -> String {
    match (domain, transitive) {
        // people holding the occupation
        (Domain::Occupation, true) => format!("?item wdt:P106/wdt:P279* wd:{entity} ."),
        (Domain::Occupation, false) => format!("?item wdt:P106 wd:{entity} ."),
        // species-rank taxa below the taxon
        (Domain::Species, true) => format!("?item wdt:P171* wd:{entity} ; wdt:P105 wd:Q7432 ."),
        (Domain::Species, false) => format!("?item wdt:P171 wd:{entity} ; wdt:P105 wd:Q7432 ."),
        (_, true) => format!("?item wdt:P31/wdt:P279* wd:{entity} ."),
        (_, false) => format!("?item wdt:P31 wd:{entity} ."),
    }
}

/// `None` when the class has no KB id, or the scope needs a country
/// property the domain does not have.
pub fn count_query(class: &ClassSpec, country: Option<&str>, transitive: bool) -> Option<String> {
    let entity = class.kb_entity_id.as_deref()?;
    let mut body = membership(class.domain, entity, transitive);
    if let Some(country) = country {
        let prop = country_property(class.domain)?;
        body.push_str(&format!(" ?item wdt:{prop} wd:{country} ."));
    }
    Some(format!("SELECT (COUNT(DISTINCT ?item) AS ?count) WHERE {{ {body} }}"))
}

/// Read `?count` from a SPARQL JSON result. No binding means no signal.
pub fn parse_count_response(body: &str) -> Result<Option<f64>> {
    let malformed = |message: &str| Error::MalformedResponse {
        source_name: "KB".into(),
        message: message.into(),
        body: body.chars().take(2000).collect(),
    };
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| malformed(&e.to_string()))?;
    let bindings = v
        .pointer("/results/bindings")
        .and_then(|b| b.as_array())
        .ok_or_else(|| malformed("no results.bindings array"))?;
    let Some(first) = bindings.first() else {
        return Ok(None);
    };
    let Some(raw) = first.pointer("/count/value") else {
        return Ok(None);
    };
    let text = raw.as_str().map(str::to_string).unwrap_or_else(|| raw.to_string());
    let n: f64 = text.parse().map_err(|_| malformed("count is not a number"))?;
    if !(n.is_finite() && n >= 0.0) {
        return Err(malformed("count is negative or non-finite"));
    }
    Ok(Some(n))
}

pub struct KbClient {
    config: SourceConfig,
    transport: LimitedTransport,
}

impl KbClient {
    pub fn new(config: SourceConfig, transport: Arc<dyn Transport>) -> Self {
        let transport = LimitedTransport::new(transport, config.min_delay());
        KbClient { config, transport }
    }

    fn run(&self, query: &str) -> Result<String> {
        let request = Request::Get {
            url: self.config.endpoint.clone(),
            query: vec![("query".into(), query.into()), ("format".into(), "json".into())],
        };
        let headers = [("Accept".to_string(), "application/sparql-results+json".to_string())];
        let resp = send_with_retries(
            &self.transport,
            &request,
            &headers,
            self.config.timeout(),
            self.config.max_retries,
        )?;
        if !resp.is_success() {
            return Err(Error::Transport {
                timeout: false,
                message: format!("status {}", resp.status),
            });
        }
        Ok(resp.body)
    }
}

impl SignalSource for KbClient {
    fn config(&self) -> &SourceConfig {
        &self.config
    }

    fn unsupported(&self, class: &ClassSpec, scope: &Scope) -> Option<String> {
        if class.kb_entity_id.is_none() {
            return Some("class has no knowledge-base id".into());
        }
        if matches!(scope, Scope::Subgroup(_)) && country_property(class.domain).is_none() {
            return Some(format!("no country property for domain {}", class.domain));
        }
        None
    }

    fn fetch(&self, class: &ClassSpec, scope: &Scope, scheme: &SubgroupScheme) -> Result<Answer> {
        let country = match scope {
            Scope::Root => None,
            Scope::Subgroup(id) => Some(
                scheme
                    .get(id)
                    .ok_or_else(|| Error::InvalidConfig(format!("subgroup `{id}` is not in the scheme")))?
                    .kb_entity_id
                    .as_str(),
            ),
        };
        let unsupported = || Error::InvalidConfig(format!("no KB query for {}/{scope}", class.id));
        let query = count_query(class, country, true).ok_or_else(unsupported)?;
        match self.run(&query) {
            Ok(raw) => Ok(Answer {
                value: parse_count_response(&raw)?,
                query,
                raw,
            }),
            Err(Error::Transport { timeout: true, .. }) => {
                log::info!(
                    "{}/{scope}: transitive query timed out, retrying with direct instance-of",
                    class.id
                );
                let query = count_query(class, country, false).ok_or_else(unsupported)?;
                let raw = self.run(&query)?;
                Ok(Answer {
                    value: parse_count_response(&raw)?,
                    query,
                    raw,
                })
            }
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Source;
    use crate::sources::http::{HttpResponse, ScriptedTransport};

    fn river() -> ClassSpec {
        ClassSpec {
            id: "river".into(),
            label_singular: "river".into(),
            label_plural: "rivers".into(),
            domain: Domain::GeographicalEntity,
            kb_entity_id: Some("Q4022".into()),
            gt_cardinality: None,
        }
    }

    fn config() -> SourceConfig {
        SourceConfig {
            min_delay_ms: 0,
            ..SourceConfig::default_for(Source::Kb, "unused")
        }
    }

    fn count_body(n: &str) -> String {
        format!(
            r#"{{"head":{{"vars":["count"]}},"results":{{"bindings":[{{"count":{{"datatype":"http://www.w3.org/2001/XMLSchema#integer","type":"literal","value":"{n}"}}}}]}}}}"#
        )
    }

    #[test]
    fn queries() {
        assert_eq!(
            count_query(&river(), None, true).unwrap(),
            "SELECT (COUNT(DISTINCT ?item) AS ?count) WHERE { ?item wdt:P31/wdt:P279* wd:Q4022 . }"
        );
        assert_eq!(
            count_query(&river(), Some("Q30"), false).unwrap(),
            "SELECT (COUNT(DISTINCT ?item) AS ?count) WHERE { ?item wdt:P31 wd:Q4022 . ?item wdt:P17 wd:Q30 . }"
        );
        let snake = ClassSpec {
            domain: Domain::Species,
            ..river()
        };
        assert!(count_query(&snake, Some("Q30"), true).is_none());
        assert!(count_query(&snake, None, true).unwrap().contains("wdt:P171*"));
        let physicist = ClassSpec {
            domain: Domain::Occupation,
            ..river()
        };
        assert!(count_query(&physicist, Some("Q30"), true)
            .unwrap()
            .contains("wdt:P27 wd:Q30"));
    }

    #[test]
    fn parses_results() {
        assert_eq!(parse_count_response(&count_body("412345")).unwrap(), Some(412345.0));
        assert_eq!(parse_count_response(r#"{"results":{"bindings":[]}}"#).unwrap(), None);
        let err = parse_count_response("<html>busy</html>").unwrap_err();
        assert!(matches!(err, Error::MalformedResponse { body, .. } if body == "<html>busy</html>"));
    }

    #[test]
    fn species_subgroup_is_unsupported() {
        let client = KbClient::new(config(), Arc::new(ScriptedTransport::new(|_| unreachable!())));
        let snake = ClassSpec {
            domain: Domain::Species,
            ..river()
        };
        assert!(client.unsupported(&snake, &Scope::subgroup("US")).is_some());
        assert!(client.unsupported(&snake, &Scope::Root).is_none());
        let scheme = SubgroupScheme::g20();
        assert_eq!(
            crate::sources::count_signal(&client, &snake, &Scope::subgroup("US"), &scheme).unwrap(),
            None
        );
    }

    #[test]
    fn timeout_falls_back_to_direct_query() {
        let t = Arc::new(ScriptedTransport::new(|req| match req {
            Request::Get { query, .. } if query[0].1.contains("P279*") => Err(Error::Transport {
                timeout: true,
                message: "timeout".into(),
            }),
            _ => Ok(HttpResponse {
                status: 200,
                body: count_body("23000"),
            }),
        }));
        let client = KbClient::new(config(), t.clone());
        let a = client
            .fetch(&river(), &Scope::subgroup("DE"), &SubgroupScheme::g20())
            .unwrap();
        assert_eq!(a.value, Some(23000.0));
        assert!(a.query.contains("wdt:P31 wd:Q4022") && a.query.contains("wd:Q183"));
        assert_eq!(t.request_count(), 2);
    }
}
