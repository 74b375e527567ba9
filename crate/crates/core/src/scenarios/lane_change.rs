//! Gap-acceptance lane changing with a keep-right rule, for vehicles that
//! are not platoon members. Lane 0 is the rightmost lane.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaneChangeParams {
    /// Minimum time between two lane changes of one vehicle [s].
    pub cooldown: f64,
    /// Bumper gap always required in the target lane [m].
    pub min_gap: f64,
    /// Extra gap per unit speed of the following vehicle [s].
    pub reaction: f64,
    /// Deceleration assumed when checking closing speeds [m/s²].
    pub safe_decel: f64,
    /// Overtake when the vehicle ahead holds us below this fraction of the
    /// desired speed.
    pub overtake_ratio: f64,
    /// Vehicles farther than `lookahead * desired speed` do not constrain [s].
    pub lookahead: f64,
}

impl Default for LaneChangeParams {
    fn default() -> Self {
        Self { cooldown: 5.0, min_gap: 2.0, reaction: 0.5, safe_decel: 4.0, overtake_ratio: 0.9, lookahead: 3.0 }
    }
}

impl LaneChangeParams {
    /// Gap a follower at `v_follow` needs behind a vehicle at `v_lead`.
    pub fn safe_gap(&self, v_follow: f64, v_lead: f64) -> f64 {
        let closing = (v_follow * v_follow - v_lead * v_lead).max(0.0) / (2.0 * self.safe_decel);
        self.min_gap + self.reaction * v_follow + closing
    }
}

/// Nearest vehicles ahead (`lead`) and behind (`lag`) in one lane, as
/// `(bumper gap, speed)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LaneView {
    pub lead: Option<(f64, f64)>,
    pub lag: Option<(f64, f64)>,
    /// Entering here would split a platoon.
    pub inside_platoon: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighborhood {
    pub speed: f64,
    pub desired_speed: f64,
    /// Time since the last lane change [s].
    pub since_change: f64,
    pub current: LaneView,
    pub left: Option<LaneView>,
    pub right: Option<LaneView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LaneChange {
    Stay,
    Left,
    Right,
}

fn admissible(view: &LaneView, speed: f64, p: &LaneChangeParams) -> bool {
    if view.inside_platoon {
        return false;
    }
    let ahead_ok = view.lead.is_none_or(|(gap, v)| gap >= p.safe_gap(speed, v));
    let behind_ok = view.lag.is_none_or(|(gap, v)| gap >= p.safe_gap(v, speed));
    ahead_ok && behind_ok
}

/// Whether the lane lets us drive at (nearly) the desired speed.
fn unconstrained(view: &LaneView, nb: &Neighborhood, p: &LaneChangeParams) -> bool {
    view.lead.is_none_or(|(gap, v)| v >= p.overtake_ratio * nb.desired_speed || gap > p.lookahead * nb.desired_speed)
}

pub fn lane_change_decision(nb: &Neighborhood, p: &LaneChangeParams) -> LaneChange {
    if nb.since_change < p.cooldown {
        return LaneChange::Stay;
    }
    if let Some(right) = &nb.right {
        if unconstrained(right, nb, p) && admissible(right, nb.speed, p) {
            return LaneChange::Right;
        }
    }
    if !unconstrained(&nb.current, nb, p) {
        if let Some(left) = &nb.left {
            let ahead_speed = nb.current.lead.map_or(f64::INFINITY, |(_, v)| v);
            let better = left.lead.is_none_or(|(gap, v)| v > ahead_speed + 1.0 || gap > p.lookahead * nb.desired_speed);
            if better && admissible(left, nb.speed, p) {
                return LaneChange::Left;
            }
        }
    }
    LaneChange::Stay
}
