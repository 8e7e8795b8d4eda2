use cycletrans::corpus::ingest::{ConfidenceOracle, IngestStats};
use cycletrans::{Result, Sentiment};

/// Keyword scorer standing in for a trained classifier. Returns P(positive)
/// of 0.9 for positive-only vocabulary, 0.1 for negative-only, 0.5 for
/// mixed or none, and exactly 0.8 for sentences containing "decent".
pub struct LexiconOracle;

const POSITIVE: &[&str] = &["great", "delicious", "friendly", "amazing", "excellent", "love"];
const NEGATIVE: &[&str] = &["terrible", "rude", "awful", "bland", "worst", "dirty", "horrible"];

impl ConfidenceOracle for LexiconOracle {
    fn confidence(&self, tokens: &[String], sentiment: Sentiment) -> Result<f64> {
        let has = |set: &[&str]| tokens.iter().any(|t| set.contains(&t.as_str()));
        let p_pos = if tokens.iter().any(|t| t == "decent") {
            0.8
        } else {
            match (has(POSITIVE), has(NEGATIVE)) {
                (true, false) => 0.9,
                (false, true) => 0.1,
                _ => 0.5,
            }
        };
        Ok(match sentiment {
            Sentiment::Positive => p_pos,
            Sentiment::Negative => 1.0 - p_pos,
        })
    }
}

/// Fifty raw review lines in both accepted formats.
pub const REVIEWS: [&str; 50] = [
    // malformed
    "no rating here",
    "abc\tthe food was great.",
    r#"{"text": "the food was great."}"#,
    "7\tthe food was great.",
    r#"{"rating": 5, "text": "   "}"#,
    // neutral rating
    "3\tthe food was great.",
    r#"{"rating": 3, "text": "It was fine, I guess."}"#,
    "3\tterrible service but great pizza.",
    "3\tOK.",
    r#"{"rating": 3, "text": "Average place."}"#,
    // whole review longer than 20 tokens
    "5\tGreat food. We came here on a sunday night with a group of friends and everyone loved every single dish.",
    "1\tTerrible. The waiter ignored us for forty minutes and then brought the wrong order to our table twice, really.",
    "5\tthe staff was friendly and the food was great and the room was clean and the bar was nice too.",
    r#"{"rating": 2, "text": "The soup was bland and cold and the bread was stale and the coffee was burnt and the bill was wrong."}"#,
    "4\tI've been coming here for years and I'll keep coming back because the tacos are amazing and the staff is kind.",
    "1\tAwful!!! Never again, never again, never again, never again, never again, never again.",
    // exactly 20 tokens
    "5\tthe staff was friendly and the food was great and the room was clean and the bar was nice.",
    // below the confidence threshold
    "5\tThe food arrived at noon.",
    "1\tWe ordered the pasta.",
    "5\tThe waiter was rude.",
    "2\tThe pizza was delicious.",
    "4\tGreat view but awful parking.",
    "1\tThe service was decent.",
    r#"{"rating": 4, "text": "Parking is downtown."}"#,
    "2\tFirst visit. The staff was rude.",
    // survivors
    "5\tThe food was great.",
    "5\tGreat pizza!",
    "4\tThe staff is friendly.",
    "4\tThe service was decent.",
    "1\tThe soup was bland.",
    "2\tTerrible service.",
    "1\tThe room was dirty!!! We left early.",
    r#"{"rating": 5, "text": "Excellent coffee. Will return."}"#,
    r#"{"rating": 1, "text": "Worst burger ever? Yes."}"#,
    "5\tI love this place",
    "4\tAMAZING tacos.",
    "2\tThe waiter was rude and the food was awful.",
    "5\tDelicious food and friendly staff.",
    "1\tHorrible experience.",
    "5\tWe've had excellent meals here.",
    "2\tThe bread was dirty.",
    "4\tThe salad was delicious.",
    "1\tThe staff is rude. Also the food is great.",
    "5\tFriendly bartender...",
    r#"{"rating": 2, "text": "Bland, bland, bland."}"#,
    "5\t  Great service.  ",
    "1\tAwful coffee.",
    "4\texcellent wine list.",
    r#"{"rating": 4, "text": "Love the patio."}"#,
    "2\tThe menu was terrible.",
];

/// Surviving first sentences with their labels, worked out by hand.
pub fn expected_survivors() -> Vec<(&'static str, Sentiment)> {
    use Sentiment::{Negative as N, Positive as P};
    vec![
        ("the staff was friendly and the food was great and the room was clean and the bar was nice.", P),
        ("The food was great.", P),
        ("Great pizza!", P),
        ("The staff is friendly.", P),
        ("The service was decent.", P),
        ("The soup was bland.", N),
        ("Terrible service.", N),
        ("The room was dirty!!!", N),
        ("Excellent coffee.", P),
        ("Worst burger ever?", N),
        ("I love this place", P),
        ("AMAZING tacos.", P),
        ("The waiter was rude and the food was awful.", N),
        ("Delicious food and friendly staff.", P),
        ("Horrible experience.", N),
        ("We've had excellent meals here.", P),
        ("The bread was dirty.", N),
        ("The salad was delicious.", P),
        ("The staff is rude.", N),
        ("Friendly bartender...", P),
        ("Bland, bland, bland.", N),
        ("Great service.", P),
        ("Awful coffee.", N),
        ("excellent wine list.", P),
        ("Love the patio.", P),
        ("The menu was terrible.", N),
    ]
}

pub fn expected_stats() -> IngestStats {
    IngestStats {
        total: 50,
        malformed: 5,
        rating_three: 5,
        empty: 0,
        too_long: 6,
        low_confidence: 8,
        kept: 26,
        ..IngestStats::default()
    }
}
