// The per-op buffers are large and short-lived; the system allocator maps
// and unmaps them on every op.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(attnforge::cli::main_with_args(std::env::args_os()));
}
