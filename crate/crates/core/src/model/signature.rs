use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FailureSignature {
    pub exception_type: String,
    pub failing_test_name: String,
    pub detail: String,
}

impl FailureSignature {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.exception_type.is_empty() || self.exception_type.chars().any(char::is_whitespace) {
            return Err(ModelError::Signature(format!(
                "bad exception type `{}`",
                self.exception_type
            )));
        }
        Ok(())
    }
}

/// Reads `<ExceptionType>[: detail]` off the first line of a stack trace.
///
/// The returned signature has an empty `failing_test_name`; callers that know
/// which test produced the trace fill it in.
pub fn extract_signature(stack_trace: &str) -> Result<FailureSignature, ModelError> {
    let first = stack_trace
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| ModelError::Signature("empty stack trace".into()))?;
    let first = first.trim_start();

    let (head, detail) = match first.split_once(':') {
        Some((head, rest)) => (head.trim(), rest.strip_prefix(' ').unwrap_or(rest)),
        None => (first.trim(), ""),
    };
    let signature = FailureSignature {
        exception_type: head.to_string(),
        failing_test_name: String::new(),
        detail: detail.to_string(),
    };
    signature.validate()?;
    Ok(signature)
}

/// Whether a failure type belongs to the null-dereference family.
pub fn is_npe_family(exception_type: &str) -> bool {
    let simple = exception_type.rsplit('.').next().unwrap_or(exception_type);
    simple == "NullDeref" || simple == "NullPointerException"
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn assertion_error_with_detail() {
        let s = extract_signature("java.lang.AssertionError: expected 1\n\tat Foo.bar(Foo.java:3)").unwrap();
        assert_eq!(s.exception_type, "java.lang.AssertionError");
        assert_eq!(s.detail, "expected 1");
    }

    #[test]
    fn bare_exception_type() {
        let s = extract_signature("java.lang.NullPointerException").unwrap();
        assert_eq!(s.exception_type, "java.lang.NullPointerException");
        assert_eq!(s.detail, "");
    }

    #[test]
    fn minilang_null_deref_head() {
        let s = extract_signature("NullDeref: field f of null at line 7").unwrap();
        assert_eq!(s.exception_type, "NullDeref");
        assert_eq!(s.detail, "field f of null at line 7");
    }

    #[test]
    fn empty_and_prose_traces_are_rejected() {
        assert!(extract_signature("").is_err());
        assert!(extract_signature("  \n \n").is_err());
        assert!(extract_signature("something went wrong").is_err());
    }

    #[test]
    fn npe_family() {
        assert!(is_npe_family("NullDeref"));
        assert!(is_npe_family("java.lang.NullPointerException"));
        assert!(!is_npe_family("java.lang.AssertionError"));
    }

    proptest! {
        #[test]
        fn type_and_detail_rebuild_the_first_line(
            ty in "[A-Za-z_][A-Za-z0-9_.$]{0,30}",
            detail in "[^\r\n]{0,40}",
        ) {
            prop_assume!(!detail.is_empty() && !detail.starts_with(' '));
            let line = format!("{ty}: {detail}");
            let s = extract_signature(&format!("{line}\n\tat somewhere")).unwrap();
            prop_assert_eq!(format!("{}: {}", s.exception_type, s.detail), line);
        }
    }
}
