#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use goalflow::app::App;
use goalflow::config::Config;
use goalflow::service::Background;
use serde_json::Value;

pub const TRIGGER: &str = "How to perform data hygiene to delete duplicate audience segments?";
pub const SUB_GOAL_QUERY: &str = "List the duplicate segments for me.";

pub fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets")
}

/// The demo configuration with its data directory moved to `data`.
pub fn demo_config(data: &Path) -> Config {
    let mut cfg = Config::load(&assets().join("demo.toml")).unwrap();
    cfg.data_dir = data.to_path_buf();
    cfg.listen = "127.0.0.1:0".into();
    cfg
}

/// Demo configuration with a private copy of the goal file, so tests that
/// add goals never touch the bundled assets.
pub fn private_config(dir: &Path) -> Config {
    let mut cfg = demo_config(&dir.join("data"));
    let goals = dir.join("goals.yaml");
    std::fs::copy(assets().join("goals.yaml"), &goals).unwrap();
    cfg.goals = Some(goals);
    cfg
}

/// A config file for `goalflow serve` in `dir`, with a private goal file
/// and the bundled assets for everything else.
pub fn served_config(dir: &Path) -> std::path::PathBuf {
    let assets = assets();
    std::fs::copy(assets.join("goals.yaml"), dir.join("goals.yaml")).unwrap();
    let text = format!(
        "listen = \"127.0.0.1:0\"\ndata_dir = \"data\"\ngoals = \"goals.yaml\"\nkb = \"{a}/kb\"\nstore = \"{a}/ops_seed.json\"\n[provider]\nkind = \"scripted\"\nfixture = \"{a}/fixtures.json\"\n",
        a = assets.display()
    );
    let path = dir.join("serve.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn app(dir: &Path) -> Arc<App> {
    Arc::new(App::from_config(&private_config(dir)).unwrap())
}

pub fn server(dir: &Path) -> (Background, Arc<App>) {
    let app = app(dir);
    (Background::start(app.clone(), "127.0.0.1:0").unwrap(), app)
}

pub struct Client {
    pub base: String,
    http: reqwest::blocking::Client,
}

impl Client {
    pub fn new(base: &str) -> Self {
        Self {
            base: base.trim_end_matches('/').to_string(),
            http: reqwest::blocking::Client::new(),
        }
    }

    pub fn post_json(&self, path: &str, body: &Value) -> (u16, Value) {
        let r = self.http.post(format!("{}{path}", self.base)).json(body).send().unwrap();
        let status = r.status().as_u16();
        (status, r.json().unwrap_or(Value::Null))
    }

    pub fn post_text(&self, path: &str, body: &str) -> (u16, String, Option<String>) {
        let r = self
            .http
            .post(format!("{}{path}", self.base))
            .body(body.to_string())
            .send()
            .unwrap();
        let status = r.status().as_u16();
        let fallback = r
            .headers()
            .get("x-goalflow-fallback")
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        (status, r.text().unwrap(), fallback)
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        let r = self.http.get(format!("{}{path}", self.base)).send().unwrap();
        let status = r.status().as_u16();
        (status, r.json().unwrap_or(Value::Null))
    }

    pub fn session(&self) -> String {
        let (status, v) = self.post_json("/sessions", &Value::Null);
        assert_eq!(status, 201, "{v}");
        v["session_id"].as_str().unwrap().to_string()
    }

    pub fn say(&self, id: &str, text: &str) -> (u16, Value) {
        self.post_json(&format!("/sessions/{id}/messages"), &serde_json::json!({ "text": text }))
    }
}
