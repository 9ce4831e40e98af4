//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations are exposed: sampling an activation and its
//! derivatives, stepping a live training session, and extracting the
//! surviving module template from that session.

pub mod demo;

use wasm_bindgen::prelude::*;

fn js_err(e: String) -> JsValue {
    JsValue::from_str(&e)
}

/// `{x, a, da, dda}` as JSON.
#[wasm_bindgen(js_name = activationCurve)]
pub fn activation_curve(kind: &str, lo: f64, hi: f64, n: usize) -> Result<String, JsValue> {
    let curve = demo::activation_curve(kind, lo, hi, n).map_err(js_err)?;
    Ok(serde_json::to_string(&curve).expect("serializable"))
}

#[wasm_bindgen]
pub struct TrainingSession {
    inner: demo::Session,
}

#[wasm_bindgen]
impl TrainingSession {
    #[wasm_bindgen(constructor)]
    pub fn new(config_json: &str) -> Result<TrainingSession, JsValue> {
        Ok(Self {
            inner: demo::Session::new(config_json).map_err(js_err)?,
        })
    }

    pub fn step(&mut self, epochs: usize) -> Result<usize, JsValue> {
        self.inner.step(epochs).map_err(js_err)
    }

    #[wasm_bindgen(js_name = isDone)]
    pub fn is_done(&self) -> bool {
        self.inner.is_done()
    }

    /// Current state as JSON; see [`demo::SessionState`].
    pub fn state(&self) -> String {
        serde_json::to_string(&self.inner.state()).expect("serializable")
    }

    pub fn template(&self) -> Result<String, JsValue> {
        self.inner.template_json().map_err(js_err)
    }
}
