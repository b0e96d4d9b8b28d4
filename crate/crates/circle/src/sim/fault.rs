//! Drop and partition fault injection over half-open virtual-time windows.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::types::NodeId;

/// Drop every envelope from `src` to `dst` sent within `[from_t, to_t)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropRule {
    pub src: NodeId,
    pub dst: NodeId,
    pub from_t: u64,
    pub to_t: u64,
}

/// Isolate `nodes` from the rest of the network within `[from_t, to_t)`.
/// Traffic inside the set (and inside its complement) is unaffected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionRule {
    pub nodes: BTreeSet<NodeId>,
    pub from_t: u64,
    pub to_t: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultPlan {
    pub drops: Vec<DropRule>,
    pub partitions: Vec<PartitionRule>,
}

impl FaultPlan {
    pub fn is_empty(&self) -> bool {
        self.drops.is_empty() && self.partitions.is_empty()
    }

    /// Whether an envelope sent from `src` to `dst` at `send_time` dies.
    pub fn should_drop(&self, src: &NodeId, dst: &NodeId, send_time: u64) -> bool {
        if src == dst {
            return false;
        }
        for rule in &self.drops {
            if &rule.src == src && &rule.dst == dst && (rule.from_t..rule.to_t).contains(&send_time)
            {
                return true;
            }
        }
        for rule in &self.partitions {
            if (rule.from_t..rule.to_t).contains(&send_time)
                && rule.nodes.contains(src) != rule.nodes.contains(dst)
            {
                return true;
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> NodeId {
        NodeId::new(s)
    }

    #[test]
    fn empty_plan_drops_nothing() {
        let plan = FaultPlan::default();
        assert!(plan.is_empty());
        assert!(!plan.should_drop(&id("a"), &id("b"), 0));
    }

    #[test]
    fn drop_rule_is_directional_and_windowed() {
        let plan = FaultPlan {
            drops: vec![DropRule { src: id("sat"), dst: id("m1"), from_t: 10, to_t: 20 }],
            partitions: vec![],
        };
        assert!(plan.should_drop(&id("sat"), &id("m1"), 10));
        assert!(plan.should_drop(&id("sat"), &id("m1"), 19));
        assert!(!plan.should_drop(&id("sat"), &id("m1"), 20), "window is half-open");
        assert!(!plan.should_drop(&id("sat"), &id("m1"), 9));
        assert!(!plan.should_drop(&id("m1"), &id("sat"), 15), "reverse direction unaffected");
        assert!(!plan.should_drop(&id("sat"), &id("m2"), 15), "other destinations unaffected");
    }

    #[test]
    fn partition_cuts_only_across_the_boundary() {
        let plan = FaultPlan {
            drops: vec![],
            partitions: vec![PartitionRule {
                nodes: [id("m3")].into_iter().collect(),
                from_t: 0,
                to_t: 3600,
            }],
        };
        assert!(plan.should_drop(&id("m3"), &id("m1"), 100));
        assert!(plan.should_drop(&id("w1"), &id("m3"), 100));
        assert!(!plan.should_drop(&id("m1"), &id("m2"), 100), "complement side intact");
        assert!(!plan.should_drop(&id("m3"), &id("m1"), 3600), "window is half-open");
    }
}
