use std::fmt::Write as _;

use super::MetricsTable;

/// Median time per episode of `variant` over `baseline` at `t_prime`,
/// averaged over seeds.
pub fn time_ratio(table: &MetricsTable, variant: &str, baseline: &str, t_prime: usize) -> Option<f64> {
    let mean = |v: &str| {
        let c = table.cells_for(v, t_prime);
        (!c.is_empty()).then(|| c.iter().map(|c| c.median_time_s).sum::<f64>() / c.len() as f64)
    };
    let (a, b) = (mean(variant)?, mean(baseline)?);
    (b > 0.0).then(|| a / b)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

/// Markdown summary: success per variant and step budget (mean ± std over
/// seeds), time ratios against `vanilla`, and the per-cell config hashes.
pub fn report(table: &MetricsTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Benchmark report\n");
    if let Some(f) = table.family {
        let _ = writeln!(s, "Task family: `{f}`\n");
    }
    let seeds: Vec<String> = table.seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(s, "Seeds: {}\n", seeds.join(", "));
    let steps = table.step_counts();
    let _ = writeln!(s, "## Success rate\n");
    let _ = write!(s, "| variant |");
    for t in &steps {
        let _ = write!(s, " T'={t} |");
    }
    let _ = write!(s, "\n|---|");
    for _ in &steps {
        let _ = write!(s, "---|");
    }
    s.push('\n');
    for v in table.variants() {
        let _ = write!(s, "| {v} |");
        for &t in &steps {
            let rates: Vec<f64> = table.cells_for(&v, t).iter().map(|c| c.success_rate).collect();
            if rates.is_empty() {
                let _ = write!(s, " - |");
            } else {
                let (m, sd) = mean_std(&rates);
                let _ = write!(s, " {:.1} ± {:.1} |", 100.0 * m, 100.0 * sd);
            }
        }
        s.push('\n');
    }
    let _ = writeln!(s, "\n## Steps and time\n");
    let _ = writeln!(s, "| variant | T' | mean NDS | median time (s) | time / vanilla | backtracking TV |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for v in table.variants() {
        for &t in &steps {
            let cells = table.cells_for(&v, t);
            if cells.is_empty() {
                continue;
            }
            let n = cells.len() as f64;
            let nds = cells.iter().map(|c| c.mean_nds).sum::<f64>() / n;
            let time = cells.iter().map(|c| c.median_time_s).sum::<f64>() / n;
            let tv = cells.iter().map(|c| c.backtracking_tv).sum::<f64>() / n;
            let ratio = time_ratio(table, &v, "vanilla", t).map(|r| format!("{r:.2}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(s, "| {v} | {t} | {nds:.1} | {time:.4} | {ratio} | {tv:.4} |");
        }
    }
    let _ = writeln!(s, "\n## Configurations\n");
    let _ = writeln!(s, "| variant | T' | seed | config hash |");
    let _ = writeln!(s, "|---|---|---|---|");
    for c in &table.cells {
        let _ = writeln!(s, "| {} | {} | {} | `{}` |", c.variant, c.t_prime, c.seed, c.config_hash);
    }
    s
}
