//! MATPOWER case-file ingestion.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    /// Series reactance in pu.
    pub reactance: f64,
}

/// Bus/branch topology with the generator/load partition.
#[derive(Debug, Clone, PartialEq)]
pub struct BusTopology {
    pub name: String,
    /// All bus ids in case-file order.
    pub bus_ids: Vec<u32>,
    /// Buses hosting an in-service generator, in bus-table order.
    pub generator_buses: Vec<u32>,
    /// Remaining buses, in bus-table order.
    pub load_buses: Vec<u32>,
    /// In-service branches.
    pub branches: Vec<Branch>,
    pub base_mva: f64,
    /// Nominal active load (MW) per entry of `bus_ids`.
    pub nominal_load_mw: Vec<f64>,
}

impl BusTopology {
    pub fn n_gen(&self) -> usize {
        self.generator_buses.len()
    }

    pub fn n_load(&self) -> usize {
        self.load_buses.len()
    }

    pub fn gen_ordinal(&self, bus: u32) -> Option<usize> {
        self.generator_buses.iter().position(|&b| b == bus)
    }

    pub fn load_ordinal(&self, bus: u32) -> Option<usize> {
        self.load_buses.iter().position(|&b| b == bus)
    }

    pub fn bus_index(&self, bus: u32) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == bus)
    }

    /// Nominal load of a bus in MW (0 for unknown buses).
    pub fn load_mw(&self, bus: u32) -> f64 {
        self.bus_index(bus)
            .map(|i| self.nominal_load_mw[i])
            .unwrap_or(0.0)
    }

    /// Checks the partition and connectivity invariants.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for &b in &self.bus_ids {
            if !seen.insert(b) {
                return Err(Error::Structure(format!("duplicate bus id {b}")));
            }
        }
        if self.generator_buses.is_empty() {
            return Err(Error::Structure("case has no generator buses".into()));
        }
        if self.load_buses.is_empty() {
            return Err(Error::Structure("case has no load buses".into()));
        }
        let gens: HashSet<u32> = self.generator_buses.iter().copied().collect();
        for b in &self.load_buses {
            if gens.contains(b) {
                return Err(Error::Structure(format!("bus {b} is both generator and load")));
            }
        }
        if gens.len() + self.load_buses.len() != self.bus_ids.len() {
            return Err(Error::Structure("generator and load buses do not cover all buses".into()));
        }
        for br in &self.branches {
            for end in [br.from, br.to] {
                if !seen.contains(&end) {
                    return Err(Error::Structure(format!("branch endpoint {end} is not a known bus")));
                }
            }
        }
        self.check_connected()
    }

    fn check_connected(&self) -> Result<()> {
        let index: HashMap<u32, usize> = self
            .bus_ids
            .iter()
            .enumerate()
            .map(|(i, &b)| (b, i))
            .collect();
        let mut adj = vec![Vec::new(); self.bus_ids.len()];
        for br in &self.branches {
            let (i, j) = (index[&br.from], index[&br.to]);
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut visited = vec![false; self.bus_ids.len()];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if let Some(i) = visited.iter().position(|v| !v) {
            return Err(Error::Structure(format!(
                "branch graph is disconnected: bus {} unreachable from bus {}",
                self.bus_ids[i], self.bus_ids[0]
            )));
        }
        Ok(())
    }
}

struct Table {
    rows: Vec<(usize, Vec<f64>)>,
}

/// Parses a MATPOWER (version 2) case body.
///
/// Generator buses come from the `gen` table (in-service rows only); every
/// other bus is a load bus. Out-of-service branches are dropped.
pub fn parse_case(text: &str) -> Result<BusTopology> {
    let mut name = String::from("case");
    let mut base_mva = None;
    let mut tables: HashMap<String, Table> = HashMap::new();

    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let lineno = i + 1;
        let line = strip_comment(lines[i]).trim();
        i += 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("function") {
            if let Some((_, n)) = rest.split_once('=') {
                name = n.trim().trim_end_matches(';').to_string();
            }
            continue;
        }
        let Some((lhs, rhs)) = line.split_once('=') else {
            continue;
        };
        let key = lhs.trim();
        let Some(field) = key.strip_prefix("mpc.") else {
            continue;
        };
        let rhs = rhs.trim();
        if field == "baseMVA" {
            let v = rhs.trim_end_matches(';').trim();
            base_mva = Some(v.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid baseMVA value '{v}'"),
            })?);
        } else if let Some(body) = rhs.strip_prefix('[') {
            let mut rows = Vec::new();
            let mut pending = body.to_string();
            let mut row_line = lineno;
            let mut closed = false;
            loop {
                let (content, done) = match pending.find(']') {
                    Some(pos) => (pending[..pos].to_string(), true),
                    None => (pending.clone(), false),
                };
                for chunk in content.split(';') {
                    let tokens: Vec<&str> = chunk
                        .split(|c: char| c.is_whitespace() || c == ',')
                        .filter(|t| !t.is_empty())
                        .collect();
                    if tokens.is_empty() {
                        continue;
                    }
                    let mut row = Vec::with_capacity(tokens.len());
                    for t in tokens {
                        let v = t.parse::<f64>().map_err(|_| Error::Parse {
                            line: row_line,
                            msg: format!("invalid number '{t}' in mpc.{field}"),
                        })?;
                        row.push(v);
                    }
                    rows.push((row_line, row));
                }
                if done {
                    closed = true;
                    break;
                }
                if i >= lines.len() {
                    break;
                }
                row_line = i + 1;
                pending = strip_comment(lines[i]).to_string();
                i += 1;
            }
            if !closed {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("unterminated matrix mpc.{field}"),
                });
            }
            tables.insert(field.to_string(), Table { rows });
        }
    }

    let eof = lines.len();
    let base_mva = base_mva.ok_or(Error::Parse {
        line: eof,
        msg: "missing mpc.baseMVA".into(),
    })?;
    let table = |n: &str| {
        tables.get(n).ok_or(Error::Parse {
            line: eof,
            msg: format!("missing mpc.{n} table"),
        })
    };
    let bus = table("bus")?;
    let gen = table("gen")?;
    let branch = table("branch")?;

    let mut bus_ids = Vec::new();
    let mut nominal_load_mw = Vec::new();
    let mut seen = HashSet::new();
    for (line, row) in &bus.rows {
        let id = integer_at(row, 0, *line, "bus")?;
        if row.len() < 3 {
            return Err(Error::Parse {
                line: *line,
                msg: format!("bus row has {} columns, need at least 3", row.len()),
            });
        }
        if !seen.insert(id) {
            return Err(Error::Structure(format!("duplicate bus id {id} (line {line})")));
        }
        bus_ids.push(id);
        nominal_load_mw.push(row[2]);
    }

    let mut gen_set = HashSet::new();
    for (line, row) in &gen.rows {
        let id = integer_at(row, 0, *line, "gen")?;
        if !seen.contains(&id) {
            return Err(Error::Structure(format!("generator at unknown bus {id} (line {line})")));
        }
        let in_service = row.get(7).is_none_or(|&s| s > 0.0);
        if in_service {
            gen_set.insert(id);
        }
    }

    let mut branches = Vec::new();
    for (line, row) in &branch.rows {
        if row.len() < 4 {
            return Err(Error::Parse {
                line: *line,
                msg: format!("branch row has {} columns, need at least 4", row.len()),
            });
        }
        let from = integer_at(row, 0, *line, "branch")?;
        let to = integer_at(row, 1, *line, "branch")?;
        for end in [from, to] {
            if !seen.contains(&end) {
                return Err(Error::Structure(format!(
                    "branch endpoint {end} is not a known bus (line {line})"
                )));
            }
        }
        let in_service = row.get(10).is_none_or(|&s| s > 0.0);
        if in_service {
            branches.push(Branch { from, to, reactance: row[3] });
        }
    }

    let generator_buses: Vec<u32> = bus_ids.iter().copied().filter(|b| gen_set.contains(b)).collect();
    let load_buses: Vec<u32> = bus_ids.iter().copied().filter(|b| !gen_set.contains(b)).collect();

    let topo = BusTopology {
        name,
        bus_ids,
        generator_buses,
        load_buses,
        branches,
        base_mva,
        nominal_load_mw,
    };
    topo.validate()?;
    Ok(topo)
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(p) => &line[..p],
        None => line,
    }
}

fn integer_at(row: &[f64], col: usize, line: usize, table: &str) -> Result<u32> {
    let v = *row.get(col).ok_or(Error::Parse {
        line,
        msg: format!("{table} row is missing column {}", col + 1),
    })?;
    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
        return Err(Error::Parse {
            line,
            msg: format!("{table} column {} must be a bus number, got {v}", col + 1),
        });
    }
    Ok(v as u32)
}

#[cfg(test)]
pub(crate) const TOY_CASE: &str = "\
function mpc = toy2
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t0\t1\t1.1\t0.9;
\t2\t1\t40\t0\t0\t0\t1\t1\t0\t0\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t0\t0\t1\t100\t1\t100\t0;
];
mpc.branch = [
\t1\t2\t0\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
];
";
