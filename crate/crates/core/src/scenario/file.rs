use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Exit, Scenario, ScenarioError, SignPlacement};
use crate::geometry::{PathPolyline, Rect, Segment, Vec2};

/// On-disk scenario format (UTF-8 JSON, unknown keys rejected).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub id: String,
    pub bounds: BoundsDoc,
    pub walls: Vec<[f64; 4]>,
    pub exits: Vec<ExitDoc>,
    pub starts: Vec<[f64; 2]>,
    #[serde(default)]
    pub guiding_lines: BTreeMap<String, Vec<[f64; 2]>>,
    #[serde(default)]
    pub exit_signs: Vec<SignDoc>,
    #[serde(default)]
    pub floor_plan_posts: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsDoc {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitDoc {
    pub id: String,
    pub portal: [f64; 4],
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignDoc {
    pub pos: [f64; 2],
    pub facing: [f64; 2],
    pub arrow: [f64; 2],
    pub range: f64,
}

impl From<&SignPlacement> for SignDoc {
    fn from(g: &SignPlacement) -> Self {
        SignDoc {
            pos: g.position.into(),
            facing: g.facing.into(),
            arrow: g.arrow_direction.into(),
            range: g.visibility_range,
        }
    }
}

fn seg(v: [f64; 4]) -> Segment {
    Segment::new(Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3]))
}

fn unseg(s: &Segment) -> [f64; 4] {
    [s.a.x, s.a.y, s.b.x, s.b.y]
}

impl TryFrom<ScenarioDocument> for Scenario {
    type Error = ScenarioError;

    fn try_from(doc: ScenarioDocument) -> Result<Self, Self::Error> {
        Scenario::from_document(doc)
    }
}

impl Scenario {
    pub fn from_document(doc: ScenarioDocument) -> Result<Scenario, ScenarioError> {
        let all_finite = doc.walls.iter().flatten().all(|v| v.is_finite())
            && doc.starts.iter().flatten().all(|v| v.is_finite())
            && doc.bounds.min.iter().chain(&doc.bounds.max).all(|v| v.is_finite());
        if !all_finite {
            return Err(ScenarioError::Invariant("coordinates must be finite".into()));
        }
        let mut guiding_lines = BTreeMap::new();
        for (exit_id, pts) in doc.guiding_lines {
            let line = PathPolyline::new(pts.into_iter().map(Vec2::from).collect()).map_err(|e| {
                ScenarioError::Invariant(format!("guiding line {exit_id:?}: {e}"))
            })?;
            guiding_lines.insert(exit_id, line);
        }
        Scenario::from_parts(
            doc.id,
            Rect::new(doc.bounds.min.into(), doc.bounds.max.into()),
            doc.walls.into_iter().map(seg).collect(),
            doc.exits
                .into_iter()
                .map(|e| Exit {
                    id: e.id,
                    portal: seg(e.portal),
                    label: e.label,
                })
                .collect(),
            doc.starts.into_iter().map(Vec2::from).collect(),
            guiding_lines,
            doc.exit_signs
                .into_iter()
                .map(|s| SignPlacement {
                    position: s.pos.into(),
                    facing: s.facing.into(),
                    arrow_direction: s.arrow.into(),
                    visibility_range: s.range,
                })
                .collect(),
            doc.floor_plan_posts.into_iter().map(Vec2::from).collect(),
        )
    }
}

impl ScenarioDocument {
    pub fn from_scenario(s: &Scenario) -> Self {
        ScenarioDocument {
            id: s.id.clone(),
            bounds: BoundsDoc {
                min: s.bounds.min.into(),
                max: s.bounds.max.into(),
            },
            walls: s.walls.iter().map(unseg).collect(),
            exits: s
                .exits
                .iter()
                .map(|e| ExitDoc {
                    id: e.id.clone(),
                    portal: unseg(&e.portal),
                    label: e.label.clone(),
                })
                .collect(),
            starts: s.start_positions.iter().map(|&p| p.into()).collect(),
            guiding_lines: s
                .guiding_lines
                .iter()
                .map(|(k, v)| (k.clone(), v.vertices().iter().map(|&p| p.into()).collect()))
                .collect(),
            exit_signs: s
                .exit_signs
                .iter()
                .map(SignDoc::from)
                .collect(),
            floor_plan_posts: s.floor_plan_posts.iter().map(|&p| p.into()).collect(),
        }
    }
}
