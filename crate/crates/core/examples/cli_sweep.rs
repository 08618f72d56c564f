//! Drives the command-line entry point in-process: a short λ_E sweep on a
//! small synthetic graph, written under a temporary directory.

fn main() {
    let out = std::env::temp_dir().join("attnforge-sweep-example");
    let config = out.join("sweep.toml");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(
        &config,
        "[data.synthetic]\nn = 40\nc = 4\nd_avg = 8.0\nh_target = 0.6\n\n\
         [data.split]\ntrain_per_class = 10\nval = 40\ntest = 80\n\n\
         [train]\nmax_epochs = 40\n",
    )
    .unwrap();
    let code = attnforge::cli::main_with_args([
        "attnforge",
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--param",
        "lambda_e",
        "--values",
        "0.001,0.1,10,1000",
    ]);
    println!("exit {code}; tables in {}", out.display());
}
