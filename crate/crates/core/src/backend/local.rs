use std::cell::RefCell;
use std::collections::VecDeque;

use chrono::Duration;

use super::{Backend, BackendAnswer, BackendError, GenerationContext};
use crate::codec::{parse_lenient, PromptTemplate, Sentence};
use crate::data::{format_timestamp, LoadSeries};

/// Value carried by a context sentence: strict parse first, then the rightmost number.
pub(crate) fn sentence_value(template: &PromptTemplate, sentence: &Sentence) -> Option<f64> {
    template
        .parse_strict(sentence.as_str())
        .map(|(_, v)| v)
        .or_else(|_| parse_lenient(sentence.as_str()))
        .ok()
}

/// Answers with the ground-truth sentence at the hint.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    truth: LoadSeries,
    template: PromptTemplate,
}

impl OracleBackend {
    pub fn new(truth: LoadSeries, template: PromptTemplate) -> Self {
        Self { truth, template }
    }
}

impl Backend for OracleBackend {
    fn next_sentence(&self, ctx: &GenerationContext) -> Result<BackendAnswer, BackendError> {
        let hint = ctx.next_timestamp_hint();
        let value = self
            .truth
            .value_at(hint)
            .ok_or_else(|| BackendError::HintOutsideTruth(format_timestamp(&hint)))?;
        Ok(BackendAnswer::immediate(self.template.render_at(hint, value)))
    }
}

/// Repeats the value of the last context sentence.
#[derive(Debug, Clone, Default)]
pub struct PersistenceBackend {
    template: PromptTemplate,
}

impl PersistenceBackend {
    pub fn new(template: PromptTemplate) -> Self {
        Self { template }
    }
}

impl Backend for PersistenceBackend {
    fn next_sentence(&self, ctx: &GenerationContext) -> Result<BackendAnswer, BackendError> {
        let last = ctx.sentences().last().expect("context is non-empty");
        let value = sentence_value(&self.template, last)
            .ok_or_else(|| BackendError::ContextUnparseable(last.to_string()))?;
        Ok(BackendAnswer::immediate(
            self.template.render_at(ctx.next_timestamp_hint(), value),
        ))
    }
}

/// Repeats the value observed one period before the hint.
#[derive(Debug, Clone)]
pub struct SeasonalNaiveBackend {
    period_hours: usize,
    template: PromptTemplate,
}

impl SeasonalNaiveBackend {
    pub fn new(period_hours: usize, template: PromptTemplate) -> Result<Self, BackendError> {
        if period_hours == 0 {
            return Err(BackendError::InvalidSpec("seasonal period must be positive".into()));
        }
        Ok(Self {
            period_hours,
            template,
        })
    }

    pub fn period_hours(&self) -> usize {
        self.period_hours
    }
}

impl Backend for SeasonalNaiveBackend {
    fn next_sentence(&self, ctx: &GenerationContext) -> Result<BackendAnswer, BackendError> {
        let hint = ctx.next_timestamp_hint();
        let wanted = hint - Duration::hours(self.period_hours as i64);
        let not_covered = || BackendError::PeriodNotCovered {
            period: self.period_hours,
            hint: format_timestamp(&hint),
        };
        if ctx.sentences().len() < self.period_hours {
            return Err(not_covered());
        }
        for sentence in ctx.sentences().iter().rev() {
            match self.template.parse_strict(sentence.as_str()) {
                Ok((ts, value)) if ts == wanted => {
                    return Ok(BackendAnswer::immediate(self.template.render_at(hint, value)))
                }
                Ok((ts, _)) if ts < wanted => break,
                Ok(_) => {}
                Err(e) => return Err(BackendError::ContextUnparseable(e.to_string())),
            }
        }
        Err(not_covered())
    }
}

/// Replays a fixed list of sentences, one per call, ignoring the context.
///
/// Holds its position in a `RefCell`, so it is single-consumer and not `Sync`.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    script: RefCell<VecDeque<Sentence>>,
}

impl ScriptedBackend {
    pub fn new(script: impl IntoIterator<Item = Sentence>) -> Self {
        Self {
            script: RefCell::new(script.into_iter().collect()),
        }
    }

    /// Convenience constructor from raw lines.
    pub fn from_lines<S: AsRef<str>>(lines: &[S]) -> Result<Self, BackendError> {
        let script = lines
            .iter()
            .map(|l| Sentence::new(l.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(script))
    }

    pub fn remaining(&self) -> usize {
        self.script.borrow().len()
    }
}

impl Backend for ScriptedBackend {
    fn next_sentence(&self, _ctx: &GenerationContext) -> Result<BackendAnswer, BackendError> {
        self.script
            .borrow_mut()
            .pop_front()
            .map(BackendAnswer::immediate)
            .ok_or(BackendError::ScriptExhausted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_timestamp;
    use chrono::NaiveDateTime;

    fn ts(text: &str) -> NaiveDateTime {
        parse_timestamp(text).unwrap()
    }

    fn context(values: &[f64], start: &str) -> GenerationContext {
        let t = PromptTemplate::default();
        let start = ts(start);
        let sentences = values
            .iter()
            .enumerate()
            .map(|(i, &v)| t.render_at(start + Duration::hours(i as i64), v))
            .collect();
        GenerationContext::new(sentences, start + Duration::hours(values.len() as i64)).unwrap()
    }

    #[test]
    fn oracle_returns_truth_and_rejects_out_of_range() {
        let truth = LoadSeries::from_values("A", ts("2019-12-01 00:00"), &[5.0, 6.0, 7.25]).unwrap();
        let oracle = OracleBackend::new(truth, PromptTemplate::default());
        let answer = oracle.next_sentence(&context(&[5.0, 6.0], "2019-12-01 00:00")).unwrap();
        assert_eq!(answer.sentence.as_str(), "The electric load at 2019-12-01 02:00 is 7.3.");
        assert_eq!(answer.attempt, 1);
        assert!(matches!(
            oracle.next_sentence(&context(&[5.0, 6.0, 7.0], "2019-12-01 00:00")),
            Err(BackendError::HintOutsideTruth(_))
        ));
    }

    #[test]
    fn persistence_repeats_last_value() {
        let p = PersistenceBackend::default();
        let answer = p.next_sentence(&context(&[3.0, 3.0, 3.0], "2019-12-01 00:00")).unwrap();
        assert_eq!(answer.sentence.as_str(), "The electric load at 2019-12-01 03:00 is 3.0.");
        let answer = p.next_sentence(&context(&[8.0, 10.0, 12.0], "2019-12-01 00:00")).unwrap();
        assert_eq!(PromptTemplate::default().parse_strict(answer.sentence.as_str()).unwrap().1, 12.0);
    }

    #[test]
    fn persistence_rejects_garbage_context() {
        let ctx = GenerationContext::new(vec![Sentence::new("static noise").unwrap()], ts("2019-12-01 00:00")).unwrap();
        assert!(matches!(
            PersistenceBackend::default().next_sentence(&ctx),
            Err(BackendError::ContextUnparseable(_))
        ));
    }

    #[test]
    fn seasonal_naive_looks_back_one_period() {
        let values: Vec<f64> = (0..30).map(|h| h as f64).collect();
        let s = SeasonalNaiveBackend::new(24, PromptTemplate::default()).unwrap();
        let answer = s.next_sentence(&context(&values, "2019-12-01 00:00")).unwrap();
        // Hint is hour 30; one day earlier is hour 6.
        assert_eq!(answer.sentence.as_str(), "The electric load at 2019-12-02 06:00 is 6.0.");
        assert!(matches!(
            s.next_sentence(&context(&values[..10], "2019-12-01 00:00")),
            Err(BackendError::PeriodNotCovered { period: 24, .. })
        ));
    }

    #[test]
    fn scripted_replays_then_exhausts() {
        let ctx = context(&[1.0], "2019-12-01 00:00");
        let s = ScriptedBackend::from_lines(&["first", "second"]).unwrap();
        assert_eq!(s.next_sentence(&ctx).unwrap().sentence.as_str(), "first");
        assert_eq!(s.next_sentence(&ctx).unwrap().sentence.as_str(), "second");
        assert_eq!(s.next_sentence(&ctx), Err(BackendError::ScriptExhausted));
        let empty = ScriptedBackend::default();
        assert_eq!(empty.next_sentence(&ctx), Err(BackendError::ScriptExhausted));
    }

    #[test]
    fn local_backends_are_deterministic() {
        let values: Vec<f64> = (0..30).map(|h| (h * 7 % 11) as f64 + 0.37).collect();
        let ctx = context(&values, "2019-12-01 00:00");
        let t = PromptTemplate::default();
        let truth = LoadSeries::from_values("A", ts("2019-12-01 00:00"), &[values.clone(), vec![4.2]].concat()).unwrap();
        let backends: Vec<Box<dyn Backend>> = vec![
            Box::new(OracleBackend::new(truth, t.clone())),
            Box::new(PersistenceBackend::new(t.clone())),
            Box::new(SeasonalNaiveBackend::new(24, t.clone()).unwrap()),
        ];
        for b in &backends {
            let first = b.next_sentence(&ctx).unwrap();
            let second = b.next_sentence(&ctx).unwrap();
            assert_eq!(first, second);
            let (when, _) = t.parse_strict(first.sentence.as_str()).unwrap();
            assert_eq!(when, ctx.next_timestamp_hint());
        }
    }
}
