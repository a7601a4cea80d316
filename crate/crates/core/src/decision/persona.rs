use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::WorkHoursDecision;

const FIRST_NAMES: &[&str] = &[
    "Chloe", "Ava", "Liam", "Noah", "Mia", "Ethan", "Zoe", "Lucas", "Grace", "Owen", "Ruby",
    "Mason", "Ella", "Leo", "Nora", "Caleb", "Ivy", "Henry", "Lily", "Jack",
];

const LAST_NAMES: &[&str] = &[
    "Lewis", "Johnson", "Chen", "Garcia", "Patel", "Kim", "Brown", "Wang", "Silva", "Novak",
    "Murphy", "Rossi", "Tanaka", "Haddad", "Okafor", "Li", "Schmidt", "Dubois", "Ivanova", "Park",
];

const TRAITS: &[&str] = &[
    "with years of experience behind the wheel. You know the best routes and handle deliveries with care, always looking for ways to optimize your time on the road.",
    "who is new to the job and eager to prove yourself. You watch what the other riders do and worry about falling behind.",
    "who loves outdoor activities and wants an active job. You enjoy the ride more than the money.",
    "supporting a family on this income. Every extra order matters to you and you hate seeing others earn more.",
    "studying part-time. You value a predictable schedule and dislike long shifts.",
    "who is competitive by nature. You keep an eye on the rankings and want to be at the top.",
    "who prefers quiet streets. You avoid traffic whenever you can, even if a trip pays a little less.",
];

/// A rider's character sheet, rendered into prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub age: u32,
    pub description: String,
    /// Hours the rider works before any decision has been made.
    pub default_shift: WorkHoursDecision,
}

/// Deterministic persona for `rider_id` under `seed`.
pub fn persona_for(seed: u64, rider_id: u32) -> Persona {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(rider_id as u64 + 1)));
    let first = FIRST_NAMES[rng.random_range(0..FIRST_NAMES.len())];
    let last = LAST_NAMES[rng.random_range(0..LAST_NAMES.len())];
    let age = rng.random_range(20..=55);
    let gender = if rng.random_bool(0.5) { "male" } else { "female" };
    let trait_text = TRAITS[rng.random_range(0..TRAITS.len())];
    // Short gig shifts leave room for imitation to widen them over many days.
    let start: u8 = rng.random_range(9..=12);
    let length: u8 = rng.random_range(2..=4);
    let name = format!("{first} {last}");
    let description = format!("You are {name}, a {age}-year-old {gender} delivery rider {trait_text}");
    Persona {
        name,
        age,
        description,
        default_shift: WorkHoursDecision::new(start, start + length),
    }
}
