//! Reading and writing the four instance files.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::instance::{
    validate_instance, DayAheadPrices, DsoContract, Instance, Invariant, NetworkModel, Node,
    PricingConfig, ProsumerAssets,
};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    s_base_kva: f64,
    v_base_kv: f64,
    u_min: f64,
    u_max: f64,
    p_grid_kw: f64,
    q_grid_kvar: f64,
    nodes: Vec<Node>,
    prosumers: Vec<ProsumerEntry>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProsumerEntry {
    id: u32,
    node: usize,
    #[serde(default)]
    p_bat_kw: f64,
    #[serde(default)]
    e_bat_kwh: f64,
    #[serde(default = "one")]
    eta_ch: f64,
    #[serde(default = "one")]
    eta_dis: f64,
    #[serde(default)]
    sigma: f64,
}

/// Paths of the four files that make up an instance.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceFiles {
    pub network: PathBuf,
    pub profiles: PathBuf,
    pub contract: PathBuf,
    pub prices: PathBuf,
}

impl InstanceFiles {
    /// Conventional file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            network: dir.join("network.json"),
            profiles: dir.join("profiles.csv"),
            contract: dir.join("contract.csv"),
            prices: dir.join("prices.csv"),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Line of the first `"key": value` occurrence inside a JSON text.
fn json_line(text: &str, key: &str, value: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    for (k, line) in text.lines().enumerate() {
        let mut rest = line;
        while let Some(pos) = rest.find(&needle) {
            let after = rest[pos + needle.len()..].trim_start();
            if let Some(after) = after.strip_prefix(':') {
                let token: String = after
                    .trim_start()
                    .chars()
                    .take_while(|c| c.is_ascii_alphanumeric() || *c == '.' || *c == '-')
                    .collect();
                if token == value {
                    return Some(k + 1);
                }
            }
            rest = &rest[pos + needle.len()..];
        }
    }
    None
}

fn parse_num(path: &Path, line: Option<usize>, field: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| CoreError::input(path, line, field, format!("not a number: {raw:?}")))?;
    if !v.is_finite() {
        return Err(CoreError::input(path, line, field, "not finite"));
    }
    Ok(v)
}

fn parse_period(path: &Path, line: Option<usize>, raw: &str) -> Result<usize> {
    let t: usize = raw
        .trim()
        .parse()
        .map_err(|_| CoreError::input(path, line, "t", format!("not a period index: {raw:?}")))?;
    if t == 0 {
        return Err(CoreError::input(path, line, "t", "periods are numbered from 1"));
    }
    Ok(t - 1)
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn check_header(path: &Path, rdr: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let header = rdr
        .headers()
        .map_err(|e| CoreError::input(path, Some(1), "header", e.to_string()))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(CoreError::input(
            path,
            Some(1),
            "header",
            format!("expected {}, found {}", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn records(
    path: &Path,
    text: &str,
    header: &[&str],
) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = csv_reader(text);
    check_header(path, &mut rdr, header)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize);
            CoreError::input(path, line, "-", e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

fn load_prices(path: &Path) -> Result<DayAheadPrices> {
    let text = read(path)?;
    let rows = records(path, &text, &["t", "lambda_spot"])?;
    let mut lambda = vec![f64::NAN; rows.len()];
    for (line, rec) in &rows {
        let line = Some(*line);
        if rec.len() != 2 {
            return Err(CoreError::input(path, line, "-", "expected 2 fields"));
        }
        let t = parse_period(path, line, &rec[0])?;
        if t >= lambda.len() || !lambda[t].is_nan() {
            return Err(CoreError::input(path, line, "t", "periods must be 1..T without repeats"));
        }
        lambda[t] = parse_num(path, line, "lambda_spot", &rec[1])?;
    }
    Ok(DayAheadPrices { lambda_spot: lambda })
}

fn load_contract(path: &Path, horizon: usize) -> Result<DsoContract> {
    let text = read(path)?;
    let rows = records(
        path,
        &text,
        &["t", "p_cap_kw", "alpha_dkk_per_kwh", "beta", "y_im", "y_ex"],
    )?;
    let mut cols = vec![vec![f64::NAN; horizon]; 5];
    let mut alpha_shed = None;
    let names = ["p_cap_kw", "alpha_dkk_per_kwh", "beta", "y_im", "y_ex"];
    let mut seen = HashSet::new();
    for (line, rec) in &rows {
        let line = Some(*line);
        if rec.first().map(String::as_str) == Some("alpha_shed") {
            if rec.len() != 2 {
                return Err(CoreError::input(path, line, "alpha_shed", "expected `alpha_shed,<value>`"));
            }
            alpha_shed = Some(parse_num(path, line, "alpha_shed", &rec[1])?);
            continue;
        }
        if rec.len() != 6 {
            return Err(CoreError::input(path, line, "-", "expected 6 fields"));
        }
        let t = parse_period(path, line, &rec[0])?;
        if t >= horizon {
            return Err(CoreError::input(
                path,
                line,
                "t",
                format!("period {} beyond horizon {horizon} of the prices file", t + 1),
            ));
        }
        if !seen.insert(t) {
            return Err(CoreError::input(path, line, "t", format!("period {} repeated", t + 1)));
        }
        for (k, name) in names.iter().enumerate() {
            cols[k][t] = parse_num(path, line, name, &rec[k + 1])?;
        }
    }
    if seen.len() != horizon {
        return Err(CoreError::input(
            path,
            None,
            "t",
            format!("{} periods given, prices file has {horizon}", seen.len()),
        ));
    }
    let alpha_shed =
        alpha_shed.ok_or_else(|| CoreError::input(path, None, "alpha_shed", "missing scalar line"))?;
    let mut it = cols.into_iter();
    let mut next = || it.next().unwrap();
    Ok(DsoContract {
        p_cap_kw: next(),
        alpha_dso: next(),
        beta: next(),
        y_im: next(),
        y_ex: next(),
        alpha_shed,
    })
}

fn load_network(path: &Path) -> Result<(NetworkModel, Vec<ProsumerEntry>, String)> {
    let text = read(path)?;
    let file: NetworkFile = serde_json::from_str(&text).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .unwrap_or("-")
            .to_string();
        CoreError::input(path, Some(e.line()), &field, msg)
    })?;
    let net = NetworkModel {
        s_base_kva: file.s_base_kva,
        v_base_kv: file.v_base_kv,
        u_min: file.u_min,
        u_max: file.u_max,
        p_grid_kw: file.p_grid_kw,
        q_grid_kvar: file.q_grid_kvar,
        nodes: file.nodes,
    };
    let ids: HashSet<usize> = net.nodes.iter().map(|n| n.id).collect();
    let mut seen = HashSet::new();
    for n in &net.nodes {
        let line = json_line(&text, "id", &n.id.to_string());
        if n.id == 0 {
            return Err(CoreError::input(path, line, "id", "node 0 is the implicit reference"));
        }
        if !seen.insert(n.id) {
            return Err(CoreError::input(path, line, "id", format!("node {} repeated", n.id)));
        }
        if n.parent != 0 && !ids.contains(&n.parent) {
            return Err(CoreError::input(
                path,
                line,
                "parent",
                format!("node {} refers to unknown parent {}", n.id, n.parent),
            ));
        }
    }
    for n in &net.nodes {
        if net.upstream(n.id).is_none() {
            return Err(CoreError::input(
                path,
                json_line(&text, "id", &n.id.to_string()),
                "parent",
                format!("cyclic network: node {} never reaches node 0", n.id),
            ));
        }
    }
    for p in &file.prosumers {
        if p.node != 0 && !ids.contains(&p.node) {
            return Err(CoreError::input(
                path,
                json_line(&text, "node", &p.node.to_string()),
                "node",
                format!("prosumer {} at unknown node {}", p.id, p.node),
            ));
        }
    }
    Ok((net, file.prosumers, text))
}

type Profiles = BTreeMap<u32, (Vec<f64>, Vec<f64>)>;

fn load_profiles(path: &Path, horizon: usize) -> Result<Profiles> {
    let text = read(path)?;
    let rows = records(path, &text, &["prosumer_id", "t", "demand_kw", "pv_kw"])?;
    let mut out: Profiles = BTreeMap::new();
    for (line, rec) in &rows {
        let line = Some(*line);
        if rec.len() != 4 {
            return Err(CoreError::input(path, line, "-", "expected 4 fields"));
        }
        let id: u32 = rec[0]
            .parse()
            .map_err(|_| CoreError::input(path, line, "prosumer_id", format!("not an id: {:?}", rec[0])))?;
        let t = parse_period(path, line, &rec[1])?;
        if t >= horizon {
            return Err(CoreError::input(
                path,
                line,
                "t",
                format!("period {} beyond horizon {horizon} of the prices file", t + 1),
            ));
        }
        let entry = out
            .entry(id)
            .or_insert_with(|| (vec![f64::NAN; horizon], vec![f64::NAN; horizon]));
        if !entry.0[t].is_nan() {
            return Err(CoreError::input(path, line, "t", format!("period {} repeated for prosumer {id}", t + 1)));
        }
        entry.0[t] = parse_num(path, line, "demand_kw", &rec[2])?;
        entry.1[t] = parse_num(path, line, "pv_kw", &rec[3])?;
    }
    Ok(out)
}

/// Member ids listed in a network file, in file order.
pub fn member_ids(network: &Path) -> Result<Vec<u32>> {
    Ok(load_network(network)?.1.iter().map(|p| p.id).collect())
}

/// Reads, cross-references and validates an instance.
pub fn load_instance(files: &InstanceFiles, config: PricingConfig) -> Result<Instance> {
    let prices = load_prices(&files.prices)?;
    let horizon = prices.lambda_spot.len();
    if horizon == 0 {
        return Err(CoreError::input(&files.prices, None, "t", "no periods"));
    }
    let contract = load_contract(&files.contract, horizon)?;
    let (network, entries, net_text) = load_network(&files.network)?;
    let mut profiles = load_profiles(&files.profiles, horizon)?;

    let mut prosumers = Vec::with_capacity(entries.len());
    for e in entries {
        let line = json_line(&net_text, "id", &e.id.to_string());
        let (demand_kw, pv_kw) = profiles.remove(&e.id).ok_or_else(|| {
            CoreError::input(&files.profiles, None, "prosumer_id", format!("no profile rows for prosumer {}", e.id))
        })?;
        if let Some(t) = demand_kw.iter().position(|v| v.is_nan()) {
            return Err(CoreError::input(
                &files.profiles,
                None,
                "t",
                format!("prosumer {} has no row for period {} (horizon {horizon})", e.id, t + 1),
            ));
        }
        if prosumers.iter().any(|p: &ProsumerAssets| p.id == e.id) {
            return Err(CoreError::input(&files.network, line, "id", format!("prosumer {} repeated", e.id)));
        }
        prosumers.push(ProsumerAssets {
            id: e.id,
            node: e.node,
            demand_kw,
            pv_kw,
            p_bat_kw: e.p_bat_kw,
            e_bat_kwh: e.e_bat_kwh,
            eta_ch: e.eta_ch,
            eta_dis: e.eta_dis,
            sigma: e.sigma,
        });
    }
    if let Some(id) = profiles.keys().next() {
        return Err(CoreError::input(
            &files.profiles,
            None,
            "prosumer_id",
            format!("prosumer {id} is not declared in the network file"),
        ));
    }

    let inst = Instance {
        network,
        prosumers,
        contract,
        prices,
        config,
    };
    if let Some(d) = validate_instance(&inst).into_iter().next() {
        let path = match d.invariant {
            Invariant::Discount
            | Invariant::CapacityLimit
            | Invariant::PenaltyRate
            | Invariant::SheddingCost => &files.contract,
            Invariant::NonFinitePrice => &files.prices,
            Invariant::NegativeProfile => &files.profiles,
            _ => &files.network,
        };
        return Err(CoreError::input(path, None, &format!("{:?}", d.invariant), d.message));
    }
    Ok(inst)
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|source| CoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the instance's four files into `dir` under the conventional names.
pub fn write_instance(inst: &Instance, dir: &Path) -> Result<InstanceFiles> {
    fs::create_dir_all(dir).map_err(|source| CoreError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let files = InstanceFiles::in_dir(dir);
    let net = &inst.network;
    let file = NetworkFile {
        s_base_kva: net.s_base_kva,
        v_base_kv: net.v_base_kv,
        u_min: net.u_min,
        u_max: net.u_max,
        p_grid_kw: net.p_grid_kw,
        q_grid_kvar: net.q_grid_kvar,
        nodes: net.nodes.clone(),
        prosumers: inst
            .prosumers
            .iter()
            .map(|p| ProsumerEntry {
                id: p.id,
                node: p.node,
                p_bat_kw: p.p_bat_kw,
                e_bat_kwh: p.e_bat_kwh,
                eta_ch: p.eta_ch,
                eta_dis: p.eta_dis,
                sigma: p.sigma,
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&file).expect("network serializes");
    json.push('\n');
    write(&files.network, json)?;

    let mut s = String::from("prosumer_id,t,demand_kw,pv_kw\n");
    for p in &inst.prosumers {
        for t in 0..inst.horizon() {
            s += &format!("{},{},{},{}\n", p.id, t + 1, p.demand_kw[t], p.pv_kw[t]);
        }
    }
    write(&files.profiles, s)?;

    let c = &inst.contract;
    let mut s = String::from("t,p_cap_kw,alpha_dkk_per_kwh,beta,y_im,y_ex\n");
    for t in 0..inst.horizon() {
        s += &format!(
            "{},{},{},{},{},{}\n",
            t + 1,
            c.p_cap_kw[t],
            c.alpha_dso[t],
            c.beta[t],
            c.y_im[t],
            c.y_ex[t]
        );
    }
    s += &format!("alpha_shed,{}\n", c.alpha_shed);
    write(&files.contract, s)?;

    let mut s = String::from("t,lambda_spot\n");
    for (t, l) in inst.prices.lambda_spot.iter().enumerate() {
        s += &format!("{},{}\n", t + 1, l);
    }
    write(&files.prices, s)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::tiny;

    #[test]
    fn round_trip_preserves_every_field() {
        let dir = tempfile::tempdir().unwrap();
        let mut inst = tiny();
        inst.prosumers[0].pv_kw = vec![0.1, 1.0 / 3.0];
        let files = write_instance(&inst, dir.path()).unwrap();
        let back = load_instance(&files, inst.config.clone()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn json_line_finds_keys() {
        let text = "{\n  \"nodes\": [\n    {\"id\": 3, \"parent\": 7},\n    {\"id\": 7}\n  ]\n}";
        assert_eq!(json_line(text, "id", "3"), Some(3));
        assert_eq!(json_line(text, "id", "7"), Some(4));
        assert_eq!(json_line(text, "id", "30"), None);
    }
}
