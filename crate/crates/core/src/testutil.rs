use crate::model::{benchmark_config, Model};
use crate::system::ClosedLoop;

pub fn benchmark_model() -> Model<f64> {
    benchmark_config().build().unwrap()
}

pub fn benchmark_cl() -> ClosedLoop<f64> {
    let m = benchmark_model();
    m.closed_loop(&m.init).unwrap()
}
