//! Built-in architectures.

use crate::arch_graph::{spdnn_merge, ArchGraph, OpLabel, ParentSet};
use crate::network_spec::{segnet_basic, NetworkSpec};
use crate::param_budget::{
    budget_polynomial, count_segnet_basic, network_template, solve_channel_base, BudgetError,
    ChannelExpr, ChannelRule,
};

/// Kernel sides of the four U-shaped parent chains whose merge yields the
/// 13-layer skip-connected network (encoder 3..15, decoder back to 3).
pub const MERGED13_PARENT_KERNELS: [&[u32]; 4] = [
    &[3, 5, 7, 9, 11, 13, 15, 13, 11, 9, 7, 5, 3],
    &[3, 5, 7, 9, 11, 13, 11, 9, 7, 5, 3],
    &[3, 5, 7, 9, 11, 9, 7, 5, 3],
    &[3, 5, 7, 9, 7, 5, 3],
];

pub fn merged13_parents() -> ParentSet {
    let seqs: Vec<Vec<OpLabel>> = MERGED13_PARENT_KERNELS
        .iter()
        .map(|ks| ks.iter().map(|k| OpLabel::conv(*k).expect("odd kernels")).collect())
        .collect();
    ParentSet::from_op_sequences(&seqs).expect("chains are valid parents")
}

pub fn merged13_graph() -> ArchGraph {
    spdnn_merge(&merged13_parents()).expect("the built-in parents merge without cycles")
}

pub fn merged13_template() -> NetworkSpec<ChannelExpr> {
    network_template(&merged13_graph(), &ChannelRule::default())
        .expect("every built-in kernel has a multiplier")
}

/// Channel base that keeps the merged network within SegNet-basic's budget.
pub fn merged13_channel_base() -> Result<u64, BudgetError> {
    let poly = budget_polynomial(&merged13_template())?;
    Ok(solve_channel_base(&poly, count_segnet_basic())?.chosen)
}

/// The merged network at a given channel base.
pub fn merged13(chp: u64) -> NetworkSpec {
    merged13_template().instantiate(chp)
}

/// Resolves a built-in network name.
pub fn builtin(name: &str, chp: Option<u64>) -> Option<NetworkSpec> {
    match name {
        "segnet-basic" => Some(segnet_basic()),
        "merged13" => {
            let chp = chp.unwrap_or_else(|| merged13_channel_base().expect("built-in template is linear"));
            Some(merged13(chp))
        }
        _ => None,
    }
}
