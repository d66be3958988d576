//! Every example runs to completion.

#[allow(dead_code)]
mod command_line {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/command_line.rs"));
}

#[allow(dead_code)]
mod euler_maruyama {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/euler_maruyama.rs"));
}

#[allow(dead_code)]
mod figure_data {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/figure_data.rs"));
}

#[allow(dead_code)]
mod geometric_gmam {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/geometric_gmam.rs"));
}

#[allow(dead_code)]
mod gillespie_extinction {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/gillespie_extinction.rs"));
}

#[allow(dead_code)]
mod heteroclinic_iamm {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/heteroclinic_iamm.rs"));
}

#[allow(dead_code)]
mod importance_sampling {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/importance_sampling.rs"));
}

#[allow(dead_code)]
mod instanton_mam {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/instanton_mam.rs"));
}

#[allow(dead_code)]
mod kramers_escape {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/kramers_escape.rs"));
}

#[allow(dead_code)]
mod lyapunov_covariance {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/lyapunov_covariance.rs"));
}

#[allow(dead_code)]
mod model_catalog {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/model_catalog.rs"));
}

#[allow(dead_code)]
mod soliton_tail {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/soliton_tail.rs"));
}

#[allow(dead_code)]
mod wkb_extinction {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/wkb_extinction.rs"));
}

#[test]
fn command_line_runs() {
    command_line::run().unwrap();
}

#[test]
fn euler_maruyama_runs() {
    euler_maruyama::run().unwrap();
}

#[test]
fn figure_data_runs() {
    figure_data::run().unwrap();
}

#[test]
fn geometric_gmam_runs() {
    geometric_gmam::run().unwrap();
}

#[test]
fn gillespie_extinction_runs() {
    gillespie_extinction::run().unwrap();
}

#[test]
fn heteroclinic_iamm_runs() {
    heteroclinic_iamm::run().unwrap();
}

#[test]
fn importance_sampling_runs() {
    importance_sampling::run().unwrap();
}

#[test]
fn instanton_mam_runs() {
    instanton_mam::run().unwrap();
}

#[test]
fn kramers_escape_runs() {
    kramers_escape::run().unwrap();
}

#[test]
fn lyapunov_covariance_runs() {
    lyapunov_covariance::run().unwrap();
}

#[test]
fn model_catalog_runs() {
    model_catalog::run().unwrap();
}

#[test]
fn soliton_tail_runs() {
    soliton_tail::run().unwrap();
}

#[test]
fn wkb_extinction_runs() {
    wkb_extinction::run().unwrap();
}
