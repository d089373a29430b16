fn main() {
    env_logger_init();
    std::process::exit(repair::cli::run());
}

// log output goes to stderr; RUST_LOG=debug surfaces solver diagnostics
fn env_logger_init() {
    let env = std::env::var("RUST_LOG").unwrap_or_else(|_| "warn".into());
    let level = match env.as_str() {
        "error" => log::LevelFilter::Error,
        "warn" => log::LevelFilter::Warn,
        "info" => log::LevelFilter::Info,
        "debug" => log::LevelFilter::Debug,
        "trace" => log::LevelFilter::Trace,
        _ => log::LevelFilter::Warn,
    };
    struct StderrLog;
    impl log::Log for StderrLog {
        fn enabled(&self, _: &log::Metadata<'_>) -> bool {
            true
        }
        fn log(&self, record: &log::Record<'_>) {
            eprintln!("[{}] {}", record.level(), record.args());
        }
        fn flush(&self) {}
    }
    let _ = log::set_logger(&StderrLog);
    log::set_max_level(level);
}
