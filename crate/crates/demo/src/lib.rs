//! Browser bindings for the ISL network simulator.
//!
//! Build with `wasm-pack build crates/demo --target web --out-dir www/pkg`
//! and serve `crates/demo/www/`.

use wasm_bindgen::prelude::*;

use islnet::cli;
use islnet::mlsim::{self, make_synthetic_room, MlError, RoomProfile};

/// The bundled room-to-room transfer scenario.
#[wasm_bindgen]
pub fn default_scenario() -> String {
    include_str!("../../core/scenarios/transfer_learning.isl").to_owned()
}

/// Runs a scenario in memory and returns its transcript. A failing command
/// ends the transcript with an `error:` line.
#[wasm_bindgen]
pub fn run_scenario(text: &str) -> String {
    let (runner, result) = cli::run_in_memory(text);
    let mut out = runner.output().to_owned();
    if let Err(e) = result {
        out.push_str(&format!("error: {e}\n"));
    }
    out
}

struct Rooms {
    base: mlsim::LinearModel,
    small: mlsim::TabularDataset,
    test: mlsim::TabularDataset,
}

fn rooms(seed: u64) -> Result<Rooms, MlError> {
    let source = RoomProfile { slope: 2.0, intercept: 1.0, noise_scale: 0.05 };
    let target = RoomProfile { slope: 2.0, intercept: 1.5, noise_scale: 0.05 };
    Ok(Rooms {
        base: mlsim::train(&make_synthetic_room(1_000_000 + seed, source, 200)?)?,
        small: make_synthetic_room(2_000_000 + seed, target, 5)?,
        test: make_synthetic_room(3_000_000 + seed, target, 200)?,
    })
}

/// Target-room test MSE after each of `0..=steps` fine-tuning steps, followed
/// by the test MSE of a model trained from scratch on the same five rows.
#[wasm_bindgen]
pub fn transfer_curve(seed: u64, steps: usize, learning_rate: f64) -> Result<Vec<f64>, JsError> {
    let r = rooms(seed)?;
    let mut model = r.base.clone();
    let mut curve = vec![mlsim::evaluate(&model, &r.test)?.mse];
    for _ in 0..steps {
        model = mlsim::fine_tune(&model, &r.small, 1, learning_rate)?;
        curve.push(mlsim::evaluate(&model, &r.test)?.mse);
    }
    curve.push(mlsim::evaluate(&mlsim::train(&r.small)?, &r.test)?.mse);
    Ok(curve)
}

/// Number of seeds in `0..seeds` where fine-tuning matches or beats training
/// from scratch on target-room test MSE.
#[wasm_bindgen]
pub fn win_count(seeds: u64, steps: usize, learning_rate: f64) -> Result<u32, JsError> {
    let mut wins = 0;
    for seed in 0..seeds {
        let r = rooms(seed)?;
        let tuned = mlsim::fine_tune(&r.base, &r.small, steps, learning_rate)?;
        let scratch = mlsim::train(&r.small)?;
        if mlsim::evaluate(&tuned, &r.test)?.mse <= mlsim::evaluate(&scratch, &r.test)?.mse {
            wins += 1;
        }
    }
    Ok(wins)
}
