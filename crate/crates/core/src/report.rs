//! Rendering run archives as aligned tables, JSON or long-format CSV, and
//! exporting LPs in CPLEX LP text format.

use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::formulation::{LpInstance, VarBound};
use crate::pricing::Scheme;
use crate::scenario::{OutputFormat, RunArchive, SchemeResult};
use crate::system::ModelKind;

/// Which part of an archive to render.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    All,
    Prices,
    Settlement,
    Verdicts,
    Comparison,
}

pub fn emit_report(archive: &RunArchive, format: OutputFormat) -> String {
    emit_section(archive, Section::All, format)
}

pub fn emit_section(archive: &RunArchive, section: Section, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let value = match section {
                Section::All => serde_json::to_value(archive).expect("archive serialises"),
                _ => json_section(archive, section),
            };
            let mut s = serde_json::to_string_pretty(&value).expect("value serialises");
            s.push('\n');
            s
        }
        OutputFormat::Csv => render_csv(archive, section),
        OutputFormat::Table => render_tables(archive, section),
    }
}

/// Whole dollars with thousands separators.
pub fn format_money(x: f64) -> String {
    let r = x.round();
    if r == 0.0 {
        return "0".into();
    }
    let digits = format!("{:.0}", r.abs());
    let mut out = String::with_capacity(digits.len() + digits.len() / 3 + 1);
    if r < 0.0 {
        out.push('-');
    }
    for (n, ch) in digits.chars().enumerate() {
        if n > 0 && (digits.len() - n) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Four decimals with trailing zeros trimmed.
pub fn format_price(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" || s.is_empty() {
        "0".into()
    } else {
        s.to_string()
    }
}

struct Table {
    title: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(title: impl Into<String>, header: &[&str]) -> Self {
        Table {
            title: title.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn render(&self, out: &mut String) {
        let cols = self.header.len();
        let mut width = vec![0; cols];
        for row in std::iter::once(&self.header).chain(&self.rows) {
            for (c, cell) in row.iter().enumerate() {
                width[c] = width[c].max(cell.chars().count());
            }
        }
        let _ = writeln!(out, "== {} ==", self.title);
        for row in std::iter::once(&self.header).chain(&self.rows) {
            let mut line = String::new();
            for (c, cell) in row.iter().enumerate() {
                if c == 0 {
                    let _ = write!(line, "{:<w$}", cell, w = width[c]);
                } else {
                    let _ = write!(line, "  {:>w$}", cell, w = width[c]);
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out.push('\n');
    }
}

fn state_headers(archive: &RunArchive) -> Vec<String> {
    std::iter::once("pre".to_string())
        .chain(archive.contingency_ids.iter().cloned())
        .collect()
}

fn bus_label(archive: &RunArchive, b: usize) -> String {
    match archive.model {
        ModelKind::SingleBus => archive.bus_ids.first().cloned().unwrap_or_default(),
        ModelKind::Network => archive.bus_ids[b].clone(),
    }
}

fn summary_table(archive: &RunArchive) -> Table {
    let mut t = Table::new("run summary", &["item", "value"]);
    t.push(vec!["input".into(), archive.input.path.clone()]);
    t.push(vec!["sha256".into(), archive.input.sha256.clone()]);
    t.push(vec!["model".into(), archive.model.to_string()]);
    t.push(vec![
        "lp size".into(),
        format!(
            "{} variables, {} constraints",
            archive.lp_size.variables, archive.lp_size.constraints
        ),
    ]);
    t.push(vec!["objective".into(), format_money(archive.primal.objective)]);
    t.push(vec![
        "optimality".into(),
        if archive.optimality.pass {
            "PASS".into()
        } else {
            format!("FAIL ({})", archive.optimality.failures.join("; "))
        },
    ]);
    t.push(vec![
        "duality gap".into(),
        format!("{:.3e}", archive.optimality.duality_gap),
    ]);
    if let Some(ts) = &archive.timestamps {
        t.push(vec!["started".into(), ts.started.clone()]);
        t.push(vec!["finished".into(), ts.finished.clone()]);
    }
    t
}

fn multiplier_table(archive: &RunArchive) -> Table {
    let states = state_headers(archive);
    let mut header = vec!["bus"];
    header.extend(states.iter().map(String::as_str));
    let mut t = Table::new("balance multipliers ($/MWh)", &header);
    for (b, pre) in archive.dual.pre_balance.iter().enumerate() {
        let mut row = vec![bus_label(archive, b), format_price(*pre)];
        row.extend(archive.dual.post_balance.iter().map(|r| format_price(r[b])));
        t.push(row);
    }
    t
}

fn price_tables(archive: &RunArchive, s: &SchemeResult, out: &mut Vec<Table>) {
    let p = &s.prices;
    match s.scheme {
        Scheme::Baseline => {
            let mut t = Table::new("baseline: nodal prices ($/MWh)", &["bus", "energy", "security"]);
            for b in 0..p.energy.len() {
                t.push(vec![
                    bus_label(archive, b),
                    format_price(p.energy[b]),
                    format_price(p.security[b]),
                ]);
            }
            out.push(t);
        }
        Scheme::Proposed => {
            let mut t = Table::new("proposed: nodal prices ($/MWh)", &["bus", "energy", "up", "down"]);
            for b in 0..p.energy.len() {
                t.push(vec![
                    bus_label(archive, b),
                    format_price(p.energy[b]),
                    format_price(p.up[b]),
                    format_price(p.dn[b]),
                ]);
            }
            out.push(t);
            if !p.transmission.is_empty() {
                let states = state_headers(archive);
                let mut header = vec!["line"];
                header.extend(states.iter().map(String::as_str));
                header.push("price");
                let mut t = Table::new("proposed: transmission prices ($/MWh)", &header);
                for (l, price) in p.transmission.iter().enumerate() {
                    let mut row = vec![archive.line_ids[l].clone()];
                    row.extend(
                        p.transmission_by_state[l]
                            .iter()
                            .map(|v| v.map_or("-".into(), format_price)),
                    );
                    row.push(format_price(*price));
                    t.push(row);
                }
                out.push(t);
            }
        }
    }
}

fn settlement_tables(archive: &RunArchive, s: &SchemeResult, out: &mut Vec<Table>) {
    let r = &s.settlement;
    let single = archive.model == ModelKind::SingleBus;
    let proposed = s.scheme == Scheme::Proposed;
    let mut header = vec!["generator", "energy rev", "up rev"];
    if !single {
        header.push("down rev");
    }
    if proposed {
        header.push("security charge");
    }
    header.extend(["total rev", "energy cost", "up cost"]);
    if !single {
        header.push("down cost");
    }
    header.extend(["total cost", "profit"]);
    let mut t = Table::new(format!("{}: generation settlement ($)", s.scheme), &header);
    let mut totals = vec![0.0; 10];
    for g in &r.generators {
        let vals = [
            g.energy_revenue,
            g.up_revenue,
            g.dn_revenue,
            g.security_charge,
            g.total_revenue,
            g.energy_cost,
            g.up_cost,
            g.dn_cost,
            g.total_cost,
            g.profit,
        ];
        for (acc, v) in totals.iter_mut().zip(vals) {
            *acc += v;
        }
        t.push(gen_cells(g.id.clone(), &vals, single, proposed));
    }
    t.push(gen_cells("total".into(), &totals, single, proposed));
    out.push(t);

    if single {
        let mut t = Table::new(format!("{}: consumer settlement ($)", s.scheme), &["consumer", "payment"]);
        for c in &r.consumers {
            t.push(vec![c.id.clone(), format_money(c.payment)]);
        }
        out.push(t);
    } else {
        let mut t = Table::new(
            format!("{}: consumer settlement ($)", s.scheme),
            &[
                "consumer",
                "energy payment",
                "up rev",
                "down rev",
                "payment",
                "utility",
                "up cost",
                "down cost",
                "total cost",
                "profit",
            ],
        );
        let mut totals = [0.0; 9];
        for c in &r.consumers {
            let vals = [
                c.energy_payment,
                c.up_revenue,
                c.dn_revenue,
                c.payment,
                c.utility.unwrap_or(0.0),
                c.up_cost,
                c.dn_cost,
                c.total_cost,
                c.profit.unwrap_or(0.0),
            ];
            for (acc, v) in totals.iter_mut().zip(vals) {
                *acc += v;
            }
            let mut row = vec![c.id.clone()];
            row.extend(vals.iter().map(|v| format_money(*v)));
            t.push(row);
        }
        let mut row = vec!["total".to_string()];
        row.extend(totals.iter().map(|v| format_money(*v)));
        t.push(row);
        out.push(t);
    }

    if !r.transmission.is_empty() {
        let mut t = Table::new(
            format!("{}: transmission settlement ($)", s.scheme),
            &["line", "price", "capacity", "revenue"],
        );
        for l in &r.transmission {
            t.push(vec![
                l.id.clone(),
                format_price(l.price),
                format_price(l.capacity),
                format_money(l.revenue),
            ]);
        }
        out.push(t);
    }

    if !r.charges.is_empty() {
        let mut t = Table::new(
            format!("{}: security charges by contingency ($)", s.scheme),
            &["generator", "contingency", "charge"],
        );
        for c in &r.charges {
            t.push(vec![c.generator.clone(), c.contingency.clone(), format_money(c.amount)]);
        }
        out.push(t);
    }

    let mut t = Table::new(format!("{}: system settlement ($)", s.scheme), &["item", "amount"]);
    t.push(vec!["consumer payment".into(), format_money(r.system.consumer_payment)]);
    t.push(vec!["generation revenue".into(), format_money(r.system.generation_revenue)]);
    if !single {
        t.push(vec![
            "transmission revenue".into(),
            format_money(r.system.transmission_revenue),
        ]);
    }
    t.push(vec!["balance".into(), format_money(r.system.balance)]);
    out.push(t);
}

fn gen_cells(label: String, vals: &[f64], single: bool, proposed: bool) -> Vec<String> {
    let mut row = vec![label];
    for (n, v) in vals.iter().enumerate() {
        let skip = (single && (n == 2 || n == 7)) || (!proposed && n == 3);
        if !skip {
            row.push(format_money(*v));
        }
    }
    row
}

fn verdict_table(s: &SchemeResult) -> Table {
    let mut t = Table::new(format!("{}: verdicts", s.scheme), &["check", "result", "detail"]);
    let label = |pass: bool| {
        match (pass, s.verdicts.enforced) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (not enforced)",
        }
        .to_string()
    };
    let a = &s.verdicts.adequacy;
    t.push(vec![
        "revenue adequacy".into(),
        label(a.pass),
        format!("min profit {}", format_money(a.min_profit)),
    ]);
    let n = &s.verdicts.neutrality;
    t.push(vec![
        "revenue neutrality".into(),
        label(n.pass),
        format!("balance {}", format_money(n.balance)),
    ]);
    t
}

fn comparison_tables(archive: &RunArchive, out: &mut Vec<Table>) {
    let Some(c) = archive.comparison.as_ref() else {
        return;
    };
    let mut t = Table::new(
        "proposed minus baseline ($)",
        &["agent", "up rev", "down rev", "security charge", "total rev", "profit"],
    );
    for g in &c.generators {
        t.push(vec![
            format!("generator {}", g.id),
            format_money(g.up_revenue),
            format_money(g.dn_revenue),
            format_money(g.security_charge),
            format_money(g.total_revenue),
            format_money(g.profit),
        ]);
    }
    for d in &c.consumers {
        t.push(vec![
            format!("consumer {}", d.id),
            format_money(d.up_revenue),
            format_money(d.dn_revenue),
            "0".into(),
            format_money(-d.payment),
            format_money(d.profit),
        ]);
    }
    out.push(t);
    let mut t = Table::new("scheme comparison summary ($)", &["item", "value"]);
    t.push(vec!["security charges".into(), format_money(c.security_charge_total)]);
    t.push(vec!["baseline imbalance".into(), format_money(c.baseline_imbalance)]);
    t.push(vec!["balance change".into(), format_money(c.balance_delta)]);
    if let Some(covered) = c.charges_cover_imbalance {
        t.push(vec![
            "charges equal missing money".into(),
            if covered { "yes" } else { "no" }.into(),
        ]);
    }
    out.push(t);
}

fn render_tables(archive: &RunArchive, section: Section) -> String {
    let mut tables = Vec::new();
    if section == Section::All {
        tables.push(summary_table(archive));
    }
    if matches!(section, Section::All | Section::Prices) {
        tables.push(multiplier_table(archive));
        for s in &archive.schemes {
            price_tables(archive, s, &mut tables);
        }
    }
    if matches!(section, Section::All | Section::Settlement) {
        for s in &archive.schemes {
            settlement_tables(archive, s, &mut tables);
        }
    }
    if matches!(section, Section::All | Section::Verdicts) {
        let mut t = Table::new("optimality certificate", &["check", "value"]);
        let o = &archive.optimality;
        t.push(vec!["result".into(), if o.pass { "PASS" } else { "FAIL" }.into()]);
        t.push(vec!["duality gap".into(), format!("{:.3e}", o.duality_gap)]);
        t.push(vec!["primal infeasibility".into(), format!("{:.3e}", o.primal_infeasibility)]);
        t.push(vec!["stationarity residual".into(), format!("{:.3e}", o.max_kkt_residual)]);
        t.push(vec!["slackness violation".into(), format!("{:.3e}", o.slackness_violation)]);
        t.push(vec!["flow multiplier product".into(), format!("{:.3e}", o.flow_dual_product)]);
        tables.push(t);
        for s in &archive.schemes {
            tables.push(verdict_table(s));
        }
    }
    if matches!(section, Section::All | Section::Comparison) {
        comparison_tables(archive, &mut tables);
    }
    let mut out = String::new();
    for t in &tables {
        t.render(&mut out);
    }
    out
}

fn json_section(archive: &RunArchive, section: Section) -> Value {
    let schemes = |f: &dyn Fn(&SchemeResult) -> Value| -> Value {
        Value::Array(archive.schemes.iter().map(f).collect())
    };
    match section {
        Section::All => serde_json::to_value(archive).expect("archive serialises"),
        Section::Prices => json!({
            "bus_ids": archive.bus_ids,
            "line_ids": archive.line_ids,
            "pre_balance": archive.dual.pre_balance,
            "post_balance": archive.dual.post_balance,
            "schemes": schemes(&|s| json!({ "scheme": s.scheme, "prices": s.prices })),
        }),
        Section::Settlement => json!({
            "schemes": schemes(&|s| json!({ "scheme": s.scheme, "settlement": s.settlement })),
        }),
        Section::Verdicts => json!({
            "optimality": archive.optimality,
            "schemes": schemes(&|s| json!({ "scheme": s.scheme, "verdicts": s.verdicts })),
        }),
        Section::Comparison => json!({ "comparison": archive.comparison }),
    }
}

struct Record {
    scheme: String,
    table: &'static str,
    entity: String,
    field: String,
    value: String,
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn csv_records(archive: &RunArchive, section: Section) -> Vec<Record> {
    let mut out = Vec::new();
    let mut push = |scheme: &str, table: &'static str, entity: String, field: &str, value: String| {
        out.push(Record {
            scheme: scheme.to_string(),
            table,
            entity,
            field: field.to_string(),
            value,
        })
    };
    if section == Section::All {
        push("", "summary", "run".into(), "objective", num(archive.primal.objective));
        push("", "summary", "run".into(), "optimality_pass", archive.optimality.pass.to_string());
        push("", "summary", "run".into(), "duality_gap", num(archive.optimality.duality_gap));
    }
    if matches!(section, Section::All | Section::Prices) {
        for (b, v) in archive.dual.pre_balance.iter().enumerate() {
            push("", "multipliers", bus_label(archive, b), "pre", num(*v));
            for (k, row) in archive.dual.post_balance.iter().enumerate() {
                let field = format!("post:{}", archive.contingency_ids[k]);
                push("", "multipliers", bus_label(archive, b), &field, num(row[b]));
            }
        }
    }
    for s in &archive.schemes {
        let sc = s.scheme.to_string();
        if matches!(section, Section::All | Section::Prices) {
            let p = &s.prices;
            for b in 0..p.energy.len() {
                let bus = bus_label(archive, b);
                push(&sc, "prices", bus.clone(), "energy", num(p.energy[b]));
                if let Some(v) = p.security.get(b) {
                    push(&sc, "prices", bus.clone(), "security", num(*v));
                }
                if let Some(v) = p.up.get(b) {
                    push(&sc, "prices", bus.clone(), "up", num(*v));
                }
                if let Some(v) = p.dn.get(b) {
                    push(&sc, "prices", bus.clone(), "down", num(*v));
                }
            }
            for (l, v) in p.transmission.iter().enumerate() {
                push(&sc, "prices", archive.line_ids[l].clone(), "transmission", num(*v));
            }
        }
        if matches!(section, Section::All | Section::Settlement) {
            let r = &s.settlement;
            for g in &r.generators {
                let fields: [(&'static str, f64); 10] = [
                    ("energy_revenue", g.energy_revenue),
                    ("up_revenue", g.up_revenue),
                    ("dn_revenue", g.dn_revenue),
                    ("security_charge", g.security_charge),
                    ("total_revenue", g.total_revenue),
                    ("energy_cost", g.energy_cost),
                    ("up_cost", g.up_cost),
                    ("dn_cost", g.dn_cost),
                    ("total_cost", g.total_cost),
                    ("profit", g.profit),
                ];
                for (f, v) in fields {
                    push(&sc, "generation", g.id.clone(), f, num(v));
                }
            }
            for c in &r.consumers {
                let mut fields: Vec<(&'static str, f64)> = vec![
                    ("energy_payment", c.energy_payment),
                    ("up_revenue", c.up_revenue),
                    ("dn_revenue", c.dn_revenue),
                    ("payment", c.payment),
                ];
                if let Some(u) = c.utility {
                    fields.push(("utility", u));
                }
                fields.extend([
                    ("up_cost", c.up_cost),
                    ("dn_cost", c.dn_cost),
                    ("total_cost", c.total_cost),
                ]);
                if let Some(p) = c.profit {
                    fields.push(("profit", p));
                }
                for (f, v) in fields {
                    push(&sc, "consumer", c.id.clone(), f, num(v));
                }
            }
            for t in &r.transmission {
                push(&sc, "transmission", t.id.clone(), "revenue", num(t.revenue));
            }
            push(&sc, "system", "system".into(), "consumer_payment", num(r.system.consumer_payment));
            push(&sc, "system", "system".into(), "generation_revenue", num(r.system.generation_revenue));
            push(&sc, "system", "system".into(), "transmission_revenue", num(r.system.transmission_revenue));
            push(&sc, "system", "system".into(), "balance", num(r.system.balance));
        }
        if matches!(section, Section::All | Section::Verdicts) {
            let v = &s.verdicts;
            push(&sc, "verdicts", "adequacy".into(), "pass", v.adequacy.pass.to_string());
            push(&sc, "verdicts", "neutrality".into(), "pass", v.neutrality.pass.to_string());
            push(&sc, "verdicts", "neutrality".into(), "balance", num(v.neutrality.balance));
        }
    }
    if matches!(section, Section::All | Section::Comparison) {
        if let Some(c) = &archive.comparison {
            for g in &c.generators {
                push("delta", "comparison", g.id.clone(), "profit", num(g.profit));
                push("delta", "comparison", g.id.clone(), "up_revenue", num(g.up_revenue));
                push("delta", "comparison", g.id.clone(), "dn_revenue", num(g.dn_revenue));
            }
            push("delta", "comparison", "system".into(), "security_charge_total", num(c.security_charge_total));
            push("delta", "comparison", "system".into(), "baseline_imbalance", num(c.baseline_imbalance));
        }
    }
    out
}

fn render_csv(archive: &RunArchive, section: Section) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scheme", "table", "entity", "field", "value"])
        .expect("write to memory");
    for r in csv_records(archive, section) {
        w.write_record([&r.scheme, r.table, &r.entity, &r.field, &r.value])
            .expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

fn lp_name(raw: &str) -> String {
    let mut s: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    while s.contains("__") {
        s = s.replace("__", "_");
    }
    let s = s.trim_matches('_').to_string();
    if s.starts_with(|c: char| c.is_ascii_digit()) || s.is_empty() {
        format!("x_{s}")
    } else {
        s
    }
}

fn lp_terms(out: &mut String, terms: impl Iterator<Item = (f64, String)>) {
    let mut first = true;
    let mut line_len = 0;
    for (a, name) in terms {
        let sign = if a < 0.0 { "-" } else { "+" };
        let piece = if first && a >= 0.0 {
            format!("{} {}", a.abs(), name)
        } else {
            format!("{} {} {}", sign, a.abs(), name)
        };
        if line_len > 200 {
            out.push_str("\n   ");
            line_len = 0;
        }
        out.push(' ');
        out.push_str(&piece);
        line_len += piece.len() + 1;
        first = false;
    }
    if first {
        out.push_str(" 0");
    }
}

/// CPLEX LP text format, for cross-checking with external solvers.
pub fn export_lp(lp: &LpInstance) -> String {
    let names: Vec<String> = lp.variables.iter().map(|v| lp_name(&v.name)).collect();
    let mut out = String::new();
    let _ = writeln!(out, "\\ {} market clearing LP", lp.kind);
    out.push_str("Minimize\n obj:");
    lp_terms(
        &mut out,
        lp.variables
            .iter()
            .zip(&names)
            .filter(|(v, _)| v.cost != 0.0)
            .map(|(v, n)| (v.cost, n.clone())),
    );
    out.push_str("\nSubject To\n");
    for (i, c) in lp.constraints.iter().enumerate() {
        let _ = write!(out, " r{}_{}:", i, lp_name(&format!("{:?}", c.tag)));
        lp_terms(&mut out, c.coeffs.iter().map(|&(j, a)| (a, names[j].clone())));
        let _ = writeln!(out, " {} {}", c.sense, c.rhs);
    }
    out.push_str("Bounds\n");
    for (v, n) in lp.variables.iter().zip(&names) {
        if v.bound == VarBound::Free {
            let _ = writeln!(out, " {n} free");
        }
    }
    out.push_str("End\n");
    out
}
