//! Drive the command line interface in-process: synth, train, predict, score.
//!
//! cargo run --release --example cli_pipeline

use combex::cli::run;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("combex-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = |n: &str| dir.join(n).to_string_lossy().into_owned();
    let steps: Vec<Vec<String>> = vec![
        vec![
            "synth",
            "--train",
            &path("train.jsonl"),
            "--test",
            &path("test.jsonl"),
            "--n-train",
            "200",
            "--n-test",
            "50",
        ],
        vec![
            "train",
            "--train",
            &path("train.jsonl"),
            "--vocab",
            &path("vocab.txt"),
            "--checkpoint",
            &path("model.cmbx"),
            "--epochs",
            "30",
            "--embed-dim",
            "32",
            "--hidden-dim",
            "64",
        ],
        vec![
            "predict",
            "--input",
            &path("test.jsonl"),
            "--vocab",
            &path("vocab.txt"),
            "--checkpoint",
            &path("model.cmbx"),
            "--output",
            &path("pred.txt"),
            "--strict",
        ],
        vec![
            "score",
            "--gold",
            &path("test.jsonl"),
            "--pred",
            &path("pred.txt"),
        ],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for step in steps {
        println!("$ combex {}", step.join(" "));
        let argv = std::iter::once("combex".to_string()).chain(step);
        let code = run(argv, &mut std::io::stdout(), &mut std::io::stderr());
        if code != 0 {
            return Err(format!("exit code {code}").into());
        }
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
