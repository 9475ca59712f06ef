//! Shared fixtures for the CLI, service and acceptance tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use embtree_cli::service::{router, AppState};
use embtree_core::explanation::Explainer;
use serde_json::Value;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_embtree")
}

/// Runs the binary with `PEACH_SEED` cleared unless the caller sets it.
pub fn run(args: &[&str]) -> Output {
    run_env(args, &[])
}

pub fn run_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args).env_remove("PEACH_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn embtree")
}

pub fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "embtree {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A synthetic bundle carried through reduce, train and summarize.
pub struct Fixture {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub reduction: PathBuf,
    pub model: PathBuf,
    pub prototypes: PathBuf,
}

impl Fixture {
    pub fn build(dir: &Path, seed: u64) -> Fixture {
        Self::build_with(dir, seed, &[])
    }

    /// Like `build`, with extra `synth` flags.
    pub fn build_with(dir: &Path, seed: u64, synth: &[&str]) -> Fixture {
        let p = |name: &str| dir.join(name);
        let s = |path: &PathBuf| path.to_str().unwrap().to_string();
        let seed = seed.to_string();
        let bundle = p("bundle");
        let out = s(&bundle);
        let mut args = vec!["synth", "--seed", &seed, "--out", &out];
        args.extend_from_slice(synth);
        ok(&args);
        let f = Fixture {
            dir: dir.to_path_buf(),
            manifest: bundle.join("manifest.json"),
            reduction: p("reduction.json"),
            model: p("model.json"),
            prototypes: p("prototypes.json"),
        };
        ok(&[
            "reduce",
            "--bundle",
            &s(&f.manifest),
            "--method",
            "pearson",
            "--percentile",
            "0.9",
            "--out",
            &s(&f.reduction),
        ]);
        ok(&[
            "train",
            "--bundle",
            &s(&f.manifest),
            "--reduction",
            &s(&f.reduction),
            "--algorithm",
            "cart",
            "--max-depth",
            "5",
            "--out",
            &s(&f.model),
        ]);
        ok(&[
            "summarize",
            "--bundle",
            &s(&f.manifest),
            "--model",
            &s(&f.model),
            "--out",
            &s(&f.prototypes),
        ]);
        f
    }

    /// `--bundle .. --reduction .. --model .. --prototypes ..`
    pub fn artifact_args(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (flag, path) in [
            ("--bundle", &self.manifest),
            ("--reduction", &self.reduction),
            ("--model", &self.model),
            ("--prototypes", &self.prototypes),
        ] {
            v.push(flag.to_string());
            v.push(path.to_str().unwrap().to_string());
        }
        v
    }

    pub fn explainer(&self) -> Explainer {
        Explainer::load(
            &self.manifest,
            &self.reduction,
            &self.model,
            &self.prototypes,
        )
        .expect("load artifacts")
    }
}

pub struct Schemas {
    validators: HashMap<&'static str, jsonschema::Validator>,
}

pub const SCHEMA_NAMES: [&str; 5] = [
    "meta",
    "global_explanation",
    "local_explanation",
    "documents",
    "error",
];

impl Schemas {
    pub fn load() -> Schemas {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas");
        let read = |name: &str| -> Value {
            serde_json::from_slice(&std::fs::read(dir.join(format!("{name}.schema.json"))).unwrap())
                .unwrap()
        };
        let common = read("common");
        let common_id = common["$id"].as_str().unwrap().to_string();
        let mut validators = HashMap::new();
        for name in SCHEMA_NAMES {
            let resource = jsonschema::Resource::from_contents(common.clone()).unwrap();
            let v = jsonschema::options()
                .with_resource(common_id.clone(), resource)
                .build(&read(name))
                .unwrap_or_else(|e| panic!("schema {name}: {e}"));
            validators.insert(name, v);
        }
        Schemas { validators }
    }

    pub fn check(&self, name: &str, instance: &Value) -> Result<(), String> {
        let v = &self.validators[name];
        let errors: Vec<String> = v
            .iter_errors(instance)
            .take(5)
            .map(|e| format!("{} at {}", e, e.instance_path))
            .collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(format!("{name} schema: {}", errors.join("; ")))
        }
    }

    pub fn check_bytes(&self, name: &str, bytes: &[u8]) -> Result<Value, String> {
        let value: Value =
            serde_json::from_slice(bytes).map_err(|e| format!("{name}: invalid JSON: {e}"))?;
        self.check(name, &value)?;
        Ok(value)
    }
}

/// The API on an ephemeral port, with its own runtime.
pub struct Server {
    pub base: String,
    runtime: tokio::runtime::Runtime,
    client: reqwest::Client,
}

pub struct Reply {
    pub status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl Server {
    pub fn start(explainer: Explainer) -> Server {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .build()
            .unwrap();
        let listener = runtime
            .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
            .unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let app = router(AppState::new(explainer), None);
        runtime.spawn(async move { axum::serve(listener, app).await });
        Server {
            base,
            runtime,
            client: reqwest::Client::new(),
        }
    }

    fn send(&self, req: reqwest::RequestBuilder) -> Reply {
        self.runtime.block_on(async {
            let resp = req.send().await.expect("request");
            let status = resp.status().as_u16();
            let content_type = resp
                .headers()
                .get("content-type")
                .and_then(|v| v.to_str().ok())
                .unwrap_or("")
                .to_string();
            let body = resp.bytes().await.expect("body").to_vec();
            Reply {
                status,
                content_type,
                body,
            }
        })
    }

    pub fn get(&self, path: &str) -> Reply {
        self.send(self.client.get(format!("{}{path}", self.base)))
    }

    pub fn post(&self, path: &str, body: &str) -> Reply {
        self.send(
            self.client
                .post(format!("{}{path}", self.base))
                .header("content-type", "application/json")
                .body(body.to_string()),
        )
    }
}
