use std::process::ExitCode;

use orthodict_cli::{exit_code, parse, run, Outcome};

fn main() -> ExitCode {
    let result = parse(std::env::args_os().collect()).and_then(|cli| run(&cli));
    match result {
        Ok(Outcome::Train(s)) => {
            println!(
                "{} blocks/atoms, rmse {:.6}, t_learn {:.3}s -> {}",
                s.report.iterations.last().map_or(0, |r| r.size),
                s.rmse,
                s.report.t_learn,
                s.out.display()
            );
            ExitCode::SUCCESS
        }
        Ok(Outcome::Represent(s)) => {
            println!("{}", serde_json::to_string(&s).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Ok(Outcome::Compare(_)) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(clap_err) = e.downcast_ref::<clap::Error>() {
                let _ = clap_err.print();
            } else if e.downcast_ref::<orthodict::Error>().is_some() {
                // already carries its cause
                eprintln!("error: {e}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
