//! Black-box objectives run as external programs.
//!
//! Protocol: the design point is written to the program's standard input as
//! one line of whitespace-separated numbers; the program prints one real
//! number on standard output and exits with status 0. Each call also gets
//! `BGO_EVAL_SEED` in its environment, a per-evaluation seed drawn from the
//! optimizer's objective stream, so stubs can make their noise reproducible.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::Duration;

use bgo_core::{DesignPoint, Error, StochasticObjective};
use rand::RngCore;
use wait_timeout::ChildExt;

pub const SEED_ENV: &str = "BGO_EVAL_SEED";

#[derive(Debug, Clone)]
pub struct ExternalObjective {
    program: String,
    args: Vec<String>,
    timeout: Duration,
}

impl ExternalObjective {
    /// `command[0]` is the program, the rest its arguments.
    pub fn new(command: &[String], timeout: Duration) -> Result<Self, Error> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("empty objective command".into()))?;
        Ok(ExternalObjective {
            program: program.clone(),
            args: args.to_vec(),
            timeout,
        })
    }

    fn fail(&self, what: impl std::fmt::Display) -> Error {
        Error::Objective(format!("`{}`: {what}", self.program))
    }
}

pub fn format_point(x: &DesignPoint) -> String {
    x.coords()
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

impl StochasticObjective for ExternalObjective {
    fn evaluate(&mut self, x: &DesignPoint, rng: &mut dyn RngCore) -> Result<f64, Error> {
        let seed = rng.next_u64();
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .env(SEED_ENV, seed.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| self.fail(format!("cannot start: {e}")))?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        // a program that exits without reading its input is not an error here
        let _ = writeln!(stdin, "{}", format_point(x));
        drop(stdin);

        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let out_reader = thread::spawn(move || {
            let mut s = String::new();
            stdout.read_to_string(&mut s).map(|_| s)
        });
        let err_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });

        let status = match child
            .wait_timeout(self.timeout)
            .map_err(|e| self.fail(format!("wait failed: {e}")))?
        {
            Some(status) => status,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(self.fail(format!("timed out after {:?}", self.timeout)));
            }
        };
        let out = out_reader
            .join()
            .expect("stdout reader")
            .map_err(|e| self.fail(format!("reading stdout: {e}")))?;
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(self.fail(format!("exited with {status}: {}", err.trim())));
        }
        let token = out
            .split_whitespace()
            .next()
            .ok_or_else(|| self.fail("printed nothing"))?;
        let y: f64 = token
            .parse()
            .map_err(|_| self.fail(format!("unparsable output `{token}`")))?;
        if !y.is_finite() {
            return Err(self.fail(format!("non-finite output `{token}`")));
        }
        Ok(y)
    }
}
