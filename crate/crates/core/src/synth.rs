//! Seeded synthetic flow tables in the UNSW-NB15 column layout, for demos,
//! tests and benchmarks.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::schema::{ATTACK_CAT_COLUMN, CONTINUOUS_COLUMNS, FLAG_COLUMNS, ID_COLUMN, LABEL_COLUMN};
use crate::ingest::AttackCategory;

/// Features whose distribution differs between the two classes.
const SIGNAL_COLUMNS: &[&str] = &["sbytes", "rate", "sttl", "sload", "ct_srv_src", "ct_state_ttl", "smean"];

const PROTOS: &[&str] = &["tcp", "udp", "arp", "unas"];
const SERVICES: &[&str] = &["-", "http", "dns", "ftp", "smtp"];
const STATES: &[&str] = &["FIN", "INT", "CON", "REQ"];

#[derive(Debug, Clone, Copy)]
pub struct SynthOptions {
    pub rows: usize,
    pub seed: u64,
    /// Probability that a row is an attack.
    pub attack_rate: f64,
    /// Emit the `attack_cat` and `label` columns.
    pub labeled: bool,
    pub first_id: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            rows: 200,
            seed: 7,
            attack_rate: 0.45,
            labeled: true,
            first_id: 1,
        }
    }
}

pub fn header(labeled: bool) -> Vec<&'static str> {
    let mut cols = vec![ID_COLUMN, CONTINUOUS_COLUMNS[0], "proto", "service", "state"];
    cols.extend(&CONTINUOUS_COLUMNS[1..]);
    cols.extend(FLAG_COLUMNS);
    if labeled {
        cols.push(ATTACK_CAT_COLUMN);
        cols.push(LABEL_COLUMN);
    }
    cols
}

fn scale(column: &str) -> f64 {
    match column {
        "sbytes" | "dbytes" | "sload" | "dload" | "rate" => 1e5,
        "sttl" | "dttl" | "swin" | "dwin" => 255.0,
        "stcpb" | "dtcpb" => 4e9,
        "dur" | "tcprtt" | "synack" | "ackdat" => 60.0,
        _ => 100.0,
    }
}

/// Write a CSV table; returns the number of attack rows.
pub fn write_csv<W: Write>(out: W, opts: &SynthOptions) -> io::Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut w = io::BufWriter::new(out);
    writeln!(w, "{}", header(opts.labeled).join(","))?;
    let attacks = AttackCategory::attacks();
    let mut n_attack = 0;
    for i in 0..opts.rows {
        let attack = rng.random::<f64>() < opts.attack_rate;
        n_attack += usize::from(attack);
        let mut row: Vec<String> = Vec::with_capacity(50);
        row.push((opts.first_id + i as u64).to_string());
        let numeric = |col: &str, rng: &mut ChaCha8Rng| -> String {
            let u: f64 = rng.random();
            let shaped = if SIGNAL_COLUMNS.contains(&col) {
                if attack {
                    u.powf(0.8)
                } else {
                    u.powf(1.25)
                }
            } else {
                u
            };
            let v = shaped * scale(col);
            if scale(col) >= 255.0 {
                format!("{}", v.round())
            } else {
                format!("{v:.6}")
            }
        };
        row.push(numeric(CONTINUOUS_COLUMNS[0], &mut rng));
        row.push(PROTOS[rng.random_range(0..PROTOS.len())].to_string());
        row.push(SERVICES[rng.random_range(0..SERVICES.len())].to_string());
        row.push(STATES[rng.random_range(0..STATES.len())].to_string());
        for col in &CONTINUOUS_COLUMNS[1..] {
            row.push(numeric(col, &mut rng));
        }
        for _ in FLAG_COLUMNS {
            row.push(u8::from(rng.random::<f64>() < 0.05).to_string());
        }
        if opts.labeled {
            let cat = if attack {
                attacks[rng.random_range(0..attacks.len())]
            } else {
                AttackCategory::Normal
            };
            row.push(cat.to_string());
            row.push(cat.label().to_string());
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(n_attack)
}
