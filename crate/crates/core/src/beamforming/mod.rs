//! Two-stage beamforming: offline wide-beam STE synthesis and the online
//! WMMSE + element-iteration optimizer for the BS precoder and DTE phases.

pub mod widebeam;
pub mod wmmse;

pub use widebeam::{
    axis_gain_matrix, directivity_gain, quadratic_form, random_ste_phases, wbs_mo, xi_matrix,
    xi_matrix_quadrature, Axis, WbsOptions, WideBeam, WideBeamSpec,
};
pub use wmmse::{
    effective_rate, ei_update_dte_phases, wmmse_cost, wmmse_ei, wmmse_update_precoder,
    wmmse_update_receivers, BeamformingSolution, DownlinkChannels, EquivalentDownlink,
    WmmseOptions,
};
