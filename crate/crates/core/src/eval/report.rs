use std::fmt::Write;

/// Top-1 of one group of items (one writer, or one word length).
#[derive(Debug, Clone, PartialEq)]
pub struct Breakdown {
    pub key: usize,
    pub count: usize,
    pub top1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `word`, `page`, `nn` or `retrieval`.
    pub mode: String,
    /// Scored items (words, pages or valid queries).
    pub items: usize,
    /// Percentages.
    pub top1: f64,
    pub top5: f64,
    pub map: Option<f64>,
    /// Retrieval queries without any relevant item.
    pub skipped: usize,
    pub per_writer: Vec<Breakdown>,
    /// Keyed by word length in characters; empty without transcriptions.
    pub by_word_length: Vec<Breakdown>,
}

fn percent(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * hits as f64 / n as f64
    }
}

fn breakdown(keys: impl Iterator<Item = Option<usize>>, ranks: &[usize]) -> Vec<Breakdown> {
    let mut groups: std::collections::BTreeMap<usize, (usize, usize)> = Default::default();
    for (key, &rank) in keys.zip(ranks) {
        if let Some(k) = key {
            let g = groups.entry(k).or_default();
            g.0 += 1;
            g.1 += usize::from(rank == 0);
        }
    }
    groups
        .into_iter()
        .map(|(key, (count, hits))| Breakdown {
            key,
            count,
            top1: percent(hits, count),
        })
        .collect()
}

impl EvalReport {
    /// Report from zero-based ranks of the true writer.
    pub fn from_ranks(mode: &str, ranks: &[usize], labels: &[usize], lengths: &[Option<usize>]) -> Self {
        let n = ranks.len();
        EvalReport {
            mode: mode.to_string(),
            items: n,
            top1: percent(ranks.iter().filter(|&&r| r < 1).count(), n),
            top5: percent(ranks.iter().filter(|&&r| r < 5).count(), n),
            map: None,
            skipped: 0,
            per_writer: breakdown(labels.iter().map(|&l| Some(l)), ranks),
            by_word_length: breakdown(lengths.iter().copied(), ranks),
        }
    }

    /// Human-readable table.
    pub fn to_table(&self, per_writer: bool, by_length: bool) -> String {
        let mut s = String::new();
        writeln!(s, "mode      {}", self.mode).unwrap();
        writeln!(s, "items     {}", self.items).unwrap();
        writeln!(s, "top1      {:.2}", self.top1).unwrap();
        writeln!(s, "top5      {:.2}", self.top5).unwrap();
        if let Some(map) = self.map {
            writeln!(s, "mAP       {map:.4}").unwrap();
            writeln!(s, "skipped   {}", self.skipped).unwrap();
        }
        for (on, title, rows) in [
            (per_writer, "writer", &self.per_writer),
            (by_length, "length", &self.by_word_length),
        ] {
            if on {
                writeln!(s, "\n{title:>8} {:>7} {:>8}", "count", "top1").unwrap();
                for b in rows {
                    writeln!(s, "{:>8} {:>7} {:>8.2}", b.key, b.count, b.top1).unwrap();
                }
            }
        }
        s
    }

    /// One `name value` line per metric.
    pub fn to_metrics(&self) -> String {
        let mut s = String::new();
        writeln!(s, "mode {}", self.mode).unwrap();
        writeln!(s, "items {}", self.items).unwrap();
        writeln!(s, "top1 {}", self.top1).unwrap();
        writeln!(s, "top5 {}", self.top5).unwrap();
        if let Some(map) = self.map {
            writeln!(s, "map {map}").unwrap();
            writeln!(s, "skipped {}", self.skipped).unwrap();
        }
        for b in &self.per_writer {
            writeln!(s, "writer.{}.top1 {}", b.key, b.top1).unwrap();
            writeln!(s, "writer.{}.count {}", b.key, b.count).unwrap();
        }
        for b in &self.by_word_length {
            writeln!(s, "length.{}.top1 {}", b.key, b.top1).unwrap();
            writeln!(s, "length.{}.count {}", b.key, b.count).unwrap();
        }
        s
    }
}
