//! Simulated raters for load tests and agreement sanity checks.

use rand::Rng;

use crate::model::{Q3Answer, RatingSubmission, TaskId, YesNo};

/// Answer each question independently at random, stopping at the first "no"
/// so the cascade fills the rest. Each rater's answers ignore everyone else's.
pub fn random_submission<R: Rng>(rng: &mut R, task_id: TaskId, rater_id: &str, p_yes: f64) -> RatingSubmission {
    let yn = |rng: &mut R| if rng.gen_bool(p_yes) { YesNo::Yes } else { YesNo::No };
    let q1 = yn(rng);
    let (q2, q3) = if q1 == YesNo::No {
        (None, None)
    } else {
        let q2 = yn(rng);
        let q3 = if q2 == YesNo::No { None } else { Some(Q3Answer::ALL[rng.gen_range(0..3)]) };
        (Some(q2), q3)
    };
    RatingSubmission { task_id, rater_id: rater_id.to_string(), q1_intelligible: q1, q2_supported: q2, q3_corrected: q3 }
}
