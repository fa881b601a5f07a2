//! SVG court diagrams for prediction records.
//!
//! The drawing is a 94 x 50 court with the halfcourt line, center circle,
//! both hoops and three-point arcs, the 11 entity markers at the anchor
//! instant, and one polyline per path: grey input history of the predicted
//! player, green ground truth, and yellow predicted paths labelled with
//! their probabilities. Attackers are red, defenders blue, the ball orange.
//! Output is deterministic: identical inputs render identical bytes.

use crate::court::{CourtSpec, Location2D};
use crate::eval::{EntityRole, PredictionRecord};

const SCALE: f64 = 10.0;

const HISTORY_COLOR: &str = "#888888";
const TRUTH_COLOR: &str = "#2e8b57";
const PREDICTION_COLOR: &str = "#e6b800";
const ATTACKER_COLOR: &str = "#d62728";
const DEFENDER_COLOR: &str = "#1f77b4";
const BALL_COLOR: &str = "#ff7f0e";

fn fmt(v: f64) -> String {
    format!("{:.2}", v * SCALE)
}

fn polyline(points: &[Location2D], class: &str, color: &str, width: f64, dash: Option<&str>) -> String {
    let pts: Vec<String> = points.iter().map(|p| format!("{},{}", fmt(p.x), fmt(p.y))).collect();
    let dash = dash
        .map(|d| format!(" stroke-dasharray=\"{d}\""))
        .unwrap_or_default();
    format!(
        "  <polyline class=\"{class}\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"{dash}/>\n",
        pts.join(" ")
    )
}

fn court_markup(court: &CourtSpec) -> String {
    let w = court.length_ft * SCALE;
    let h = court.width_ft * SCALE;
    let half = court.halfcourt_x_ft * SCALE;
    let mid_y = court.width_ft / 2.0 * SCALE;
    let hoop_r = 0.75 * SCALE;
    let center_r = 6.0 * SCALE;
    let three_r = 23.75 * SCALE;
    let hoop_low = 5.25 * SCALE;
    let hoop_high = (court.length_ft - 5.25) * SCALE;
    // Three-point arc endpoints 3 ft off each sideline.
    let arc_y0 = 3.0 * SCALE;
    let arc_y1 = (court.width_ft - 3.0) * SCALE;
    let mut s = String::new();
    s.push_str(&format!(
        "  <rect class=\"court\" x=\"0\" y=\"0\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"#fdf6ec\" stroke=\"#333333\" stroke-width=\"2\"/>\n"
    ));
    s.push_str(&format!(
        "  <line class=\"court\" x1=\"{half:.2}\" y1=\"0\" x2=\"{half:.2}\" y2=\"{h:.2}\" stroke=\"#333333\" stroke-width=\"1.5\"/>\n"
    ));
    s.push_str(&format!(
        "  <circle class=\"court\" cx=\"{half:.2}\" cy=\"{mid_y:.2}\" r=\"{center_r:.2}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1.5\"/>\n"
    ));
    for hoop_x in [hoop_low, hoop_high] {
        s.push_str(&format!(
            "  <circle class=\"court\" cx=\"{hoop_x:.2}\" cy=\"{mid_y:.2}\" r=\"{hoop_r:.2}\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\"/>\n"
        ));
    }
    let sweep_low = 1;
    let sweep_high = 0;
    for (hoop_x, sweep) in [(hoop_low, sweep_low), (hoop_high, sweep_high)] {
        s.push_str(&format!(
            "  <path class=\"court\" d=\"M {hoop_x:.2} {arc_y0:.2} A {three_r:.2} {three_r:.2} 0 0 {sweep} {hoop_x:.2} {arc_y1:.2}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n"
        ));
    }
    s
}

/// Renders one prediction record as a complete SVG document.
pub fn render_svg(record: &PredictionRecord, court: &CourtSpec) -> String {
    let w = court.length_ft * SCALE;
    let h = court.width_ft * SCALE;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n"
    ));
    svg.push_str(&court_markup(court));

    // History of the predicted player, its ground-truth future, then the
    // predicted paths.
    svg.push_str(&polyline(&record.history, "path-history", HISTORY_COLOR, 3.0, None));
    let mut truth = vec![record.anchor];
    truth.extend(record.ground_truth.iter().copied());
    svg.push_str(&polyline(&truth, "path-truth", TRUTH_COLOR, 3.0, None));
    for (mode, path) in record.modes.iter().enumerate() {
        let mut pts = vec![record.anchor];
        pts.extend(path.iter().copied());
        svg.push_str(&polyline(&pts, "path-pred", PREDICTION_COLOR, 2.5, Some("6,4")));
        if let Some(end) = path.last() {
            let label = format!("{:.0}%", record.probs.get(mode).copied().unwrap_or(0.0) * 100.0);
            svg.push_str(&format!(
                "  <text class=\"prob-label\" x=\"{}\" y=\"{}\" font-size=\"14\" font-family=\"sans-serif\" fill=\"#4d3d00\">{label}</text>\n",
                fmt(end.x + 0.8),
                fmt(end.y)
            ));
        }
    }

    for marker in &record.entities {
        let (class, color, r) = match marker.role {
            EntityRole::Attacker => ("entity attacker", ATTACKER_COLOR, 0.9),
            EntityRole::Defender => ("entity defender", DEFENDER_COLOR, 0.9),
            EntityRole::Ball => ("entity ball", BALL_COLOR, 0.6),
        };
        svg.push_str(&format!(
            "  <circle class=\"{class}\" cx=\"{}\" cy=\"{}\" r=\"{:.1}\" fill=\"{color}\" stroke=\"#222222\" stroke-width=\"1\"/>\n",
            fmt(marker.location.x),
            fmt(marker.location.y),
            r * SCALE
        ));
    }

    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::EntityMarker;

    fn record() -> PredictionRecord {
        PredictionRecord {
            sample_index: 0,
            player_of_interest_id: 1,
            anchor: Location2D::new(60.0, 25.0),
            history: (0..5).map(|i| Location2D::new(55.0 + i as f64, 25.0)).collect(),
            ground_truth: (1..4).map(|i| Location2D::new(60.0 + i as f64, 26.0)).collect(),
            modes: vec![
                (1..4).map(|i| Location2D::new(60.0 + i as f64, 26.0)).collect(),
                (1..4).map(|i| Location2D::new(60.0 + i as f64, 24.0)).collect(),
            ],
            probs: vec![0.6, 0.4],
            entities: {
                let mut e: Vec<EntityMarker> = (0..5)
                    .map(|i| EntityMarker {
                        role: EntityRole::Attacker,
                        player_id: Some(i + 1),
                        location: Location2D::new(50.0 + i as f64 * 5.0, 20.0),
                    })
                    .collect();
                e.extend((0..5).map(|i| EntityMarker {
                    role: EntityRole::Defender,
                    player_id: None,
                    location: Location2D::new(52.0 + i as f64 * 5.0, 30.0),
                }));
                e.push(EntityMarker {
                    role: EntityRole::Ball,
                    player_id: None,
                    location: Location2D::new(61.0, 25.0),
                });
                e
            },
        }
    }

    #[test]
    fn svg_counts_paths_and_markers() {
        let svg = render_svg(&record(), &CourtSpec::default());
        assert_eq!(svg.matches("class=\"path-history\"").count(), 1);
        assert_eq!(svg.matches("class=\"path-truth\"").count(), 1);
        assert_eq!(svg.matches("class=\"path-pred\"").count(), 2);
        assert_eq!(svg.matches("class=\"entity attacker\"").count(), 5);
        assert_eq!(svg.matches("class=\"entity defender\"").count(), 5);
        assert_eq!(svg.matches("class=\"entity ball\"").count(), 1);
        assert_eq!(svg.matches("class=\"prob-label\"").count(), 2);
        assert!(svg.contains("60%"));
    }

    #[test]
    fn svg_is_deterministic() {
        let a = render_svg(&record(), &CourtSpec::default());
        let b = render_svg(&record(), &CourtSpec::default());
        assert_eq!(a, b);
    }

    /// Minimal well-formedness: every opened tag closes and the document
    /// parses as a single root element.
    #[test]
    fn svg_tags_balance() {
        let svg = render_svg(&record(), &CourtSpec::default());
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        let opens = svg.matches('<').count();
        let closes = svg.matches('>').count();
        assert_eq!(opens, closes);
        // Every non-root element self-closes.
        let self_closing = svg.matches("/>").count();
        let elements = svg.matches("\n  <").count() - svg.matches("<text").count();
        assert_eq!(self_closing, elements);
    }
}
