//! Core of the manners annotating proxy: the document model, the
//! selector language, rules and subscriptions, the built-in validators,
//! and the pipeline that turns fired rules into a report merged back
//! into the delivered page.

pub mod annotator;
pub mod diagnostic;
pub mod doc;
pub mod rules;
pub mod selector;
pub mod validators;

pub use annotator::{annotate, merge, run_pipeline, PipelineEnv, Merged, PipelineError, Report, Stats};
pub use diagnostic::Diagnostic;
pub use doc::{parse_html, DocTree, NodeId, NodePath, ParseOptions};
pub use rules::{
    parse_ruleset, resolve_active_rules, Rule, RuleError, RuleSet, RuleSetKey, Severity, Subscription,
    SubscriptionEntry,
};
pub use selector::Selector;
pub use validators::{Annotation, Registry, Services, TextRange};
