//! Sign statistics over sentence scores, scatter exports and the HTML
//! heatmap.
//!
//! A sentence counts as positive when its score is strictly greater than
//! zero; an exact zero counts as non-positive. Percentages are kept at full
//! precision and rendered with two decimals, rounding exact ties to even.

use std::fmt::Write as _;

use crate::attribution::AttributionRecord;
use crate::label::{Category, Label};

pub const ZERO_RULE_NOTE: &str = "sentence_ligas > 0 counts as positive; exactly 0 counts as non-positive";
pub const ROUNDING_NOTE: &str = "percentages computed in full precision, printed to 2 decimals with ties to even";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    /// Correctly classified.
    CC,
    /// Misclassified.
    MC,
}

pub fn outcome(predicted: Label, gold: Label) -> Outcome {
    if predicted == gold {
        Outcome::CC
    } else {
        Outcome::MC
    }
}

/// One sentence as seen by [`sign_stats`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignRecord {
    pub category: Category,
    pub outcome: Outcome,
    pub sentence_ligas: f64,
}

impl From<&AttributionRecord> for SignRecord {
    fn from(r: &AttributionRecord) -> Self {
        Self {
            category: r.category,
            outcome: outcome(r.predicted, r.gold),
            sentence_ligas: r.sentence_ligas,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CategoryStats {
    pub category: Category,
    pub c: usize,
    pub cc: usize,
    pub mc: usize,
    pub cc_plus: usize,
    pub cc_minus: usize,
    pub mc_plus: usize,
    pub mc_minus: usize,
}

fn percent(part: usize, whole: usize) -> Option<f64> {
    (whole > 0).then(|| 100.0 * part as f64 / whole as f64)
}

impl CategoryStats {
    pub fn empty(category: Category) -> Self {
        Self {
            category,
            c: 0,
            cc: 0,
            mc: 0,
            cc_plus: 0,
            cc_minus: 0,
            mc_plus: 0,
            mc_minus: 0,
        }
    }

    fn count(&mut self, r: &SignRecord) {
        let positive = r.sentence_ligas > 0.0;
        self.c += 1;
        match (r.outcome, positive) {
            (Outcome::CC, true) => self.cc_plus += 1,
            (Outcome::CC, false) => self.cc_minus += 1,
            (Outcome::MC, true) => self.mc_plus += 1,
            (Outcome::MC, false) => self.mc_minus += 1,
        }
        self.cc = self.cc_plus + self.cc_minus;
        self.mc = self.mc_plus + self.mc_minus;
    }

    /// `None` when there are no correctly classified sentences.
    pub fn cc_plus_pct(&self) -> Option<f64> {
        percent(self.cc_plus, self.cc)
    }

    pub fn mc_plus_pct(&self) -> Option<f64> {
        percent(self.mc_plus, self.mc)
    }
}

/// Per-category counts, in [`Category::ALL`] order, for categories present.
pub fn sign_stats<'a>(records: impl IntoIterator<Item = &'a SignRecord>) -> Vec<CategoryStats> {
    let mut all: Vec<CategoryStats> = Category::ALL.iter().map(|&c| CategoryStats::empty(c)).collect();
    for r in records {
        let i = Category::ALL
            .iter()
            .position(|&c| c == r.category)
            .expect("category listed");
        all[i].count(r);
    }
    all.into_iter().filter(|s| s.c > 0).collect()
}

/// `100 * sum(MC+) / sum(MC)`; `None` without misclassified sentences.
pub fn aggregate_mc_positive(stats: &[CategoryStats]) -> Option<f64> {
    let plus = stats.iter().map(|s| s.mc_plus).sum();
    let total = stats.iter().map(|s| s.mc).sum();
    percent(plus, total)
}

fn pct_cell(p: Option<f64>) -> String {
    p.map(|v| format!("{v:.2}")).unwrap_or_default()
}

pub const STATS_HEADER: &str = "category,C,CC,MC,CCplus,CCminus,MCplus,MCminus,CCplus_pct,MCplus_pct";

/// Stats CSV: a digest comment, the header, one row per category, then
/// comment lines with the aggregate rate and the counting conventions.
pub fn stats_csv(stats: &[CategoryStats], config_digest: &str) -> String {
    let mut out = format!("# config_digest={config_digest}\n{STATS_HEADER}\n");
    for s in stats {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.category,
            s.c,
            s.cc,
            s.mc,
            s.cc_plus,
            s.cc_minus,
            s.mc_plus,
            s.mc_minus,
            pct_cell(s.cc_plus_pct()),
            pct_cell(s.mc_plus_pct())
        );
    }
    let _ = writeln!(out, "# MCplus_aggregate_pct={}", pct_cell(aggregate_mc_positive(stats)));
    let _ = writeln!(out, "# {ZERO_RULE_NOTE}");
    let _ = writeln!(out, "# {ROUNDING_NOTE}");
    out
}

/// Parses the rows of [`stats_csv`] output, skipping comments.
pub fn parse_stats_csv(text: &str) -> Result<Vec<CategoryStats>, String> {
    let mut rows = Vec::new();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    match lines.next() {
        Some(h) if h == STATS_HEADER => {}
        other => return Err(format!("bad stats header {other:?}")),
    }
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(format!("row {}: expected 10 fields, got {}", i + 1, f.len()));
        }
        let n = |k: usize| {
            f[k].parse::<usize>()
                .map_err(|e| format!("row {} column {}: {e}", i + 1, k + 1))
        };
        let category = f[0].parse::<Category>().map_err(|e| format!("row {}: {e}", i + 1))?;
        rows.push(CategoryStats {
            category,
            c: n(1)?,
            cc: n(2)?,
            mc: n(3)?,
            cc_plus: n(4)?,
            cc_minus: n(5)?,
            mc_plus: n(6)?,
            mc_minus: n(7)?,
        });
    }
    Ok(rows)
}

/// Mean `|sentence_ligas|` per gold label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnitudeComparison {
    pub la_mean_abs: Option<f64>,
    pub lua_mean_abs: Option<f64>,
    pub la_count: usize,
    pub lua_count: usize,
}

impl MagnitudeComparison {
    /// LUA mean over LA mean.
    pub fn lua_over_la(&self) -> Option<f64> {
        match (self.la_mean_abs, self.lua_mean_abs) {
            (Some(la), Some(lua)) if la > 0.0 => Some(lua / la),
            _ => None,
        }
    }
}

pub fn magnitude_by_label(records: &[AttributionRecord]) -> MagnitudeComparison {
    let mean = |label: Label| {
        let v: Vec<f64> = records
            .iter()
            .filter(|r| r.gold == label)
            .map(|r| r.sentence_ligas.abs())
            .collect();
        let n = v.len();
        ((n > 0).then(|| crate::exact::exact_sum(v) / n as f64), n)
    };
    let (la_mean_abs, la_count) = mean(Label::LA);
    let (lua_mean_abs, lua_count) = mean(Label::LUA);
    MagnitudeComparison {
        la_mean_abs,
        lua_mean_abs,
        la_count,
        lua_count,
    }
}

/// Scatter points split by outcome, in input order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scatter {
    pub cc: Vec<(f64, f64)>,
    pub mc: Vec<(f64, f64)>,
}

pub fn scatter_export<'a>(records: impl IntoIterator<Item = &'a AttributionRecord>) -> Scatter {
    let mut s = Scatter::default();
    for r in records {
        let p = (r.prob, r.sentence_ligas);
        match outcome(r.predicted, r.gold) {
            Outcome::CC => s.cc.push(p),
            Outcome::MC => s.mc.push(p),
        }
    }
    s
}

pub fn scatter_csv(points: &[(f64, f64)], config_digest: &str) -> String {
    let mut out = format!("# config_digest={config_digest}\nprob,ligas\n");
    for (p, l) in points {
        let _ = writeln!(out, "{p},{l}");
    }
    out
}

/// Probability on x, score on y; one `<circle>` per point.
pub fn scatter_svg(points: &[(f64, f64)], title: &str, config_digest: &str) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const PAD: f64 = 40.0;
    let ymax = points.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let ymax = if ymax > 0.0 { ymax } else { 1.0 };
    let x = |p: f64| PAD + p.clamp(0.0, 1.0) * (W - 2.0 * PAD);
    let y = |l: f64| H / 2.0 - l / ymax * (H / 2.0 - PAD);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(out, "<!-- config_digest={config_digest} -->");
    let _ = writeln!(out, "<title>{}</title>", escape_html(title));
    let _ = writeln!(out, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<line x1=\"{PAD}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#999\"/>",
        H / 2.0,
        W - PAD
    );
    let _ = writeln!(
        out,
        "<line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"#999\"/>",
        H - PAD
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">prediction probability</text>",
        W / 2.0,
        H - 8.0
    );
    let _ = writeln!(
        out,
        "<text x=\"12\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 12 {0})\" text-anchor=\"middle\">LIGAS (max |y| = {ymax:.4})</text>",
        H / 2.0
    );
    for &(p, l) in points {
        let _ = writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.6\"/>",
            x(p),
            y(l),
            if l > 0.0 { "#2a9d2a" } else { "#c83232" }
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

const GREEN: (u8, u8, u8) = (0, 170, 0);
const RED: (u8, u8, u8) = (210, 0, 0);

/// Background for a word: white at 0, full green or red at `|l| = max`.
pub fn heat_color(ligas: f64, max_abs: f64) -> (u8, u8, u8) {
    if max_abs <= 0.0 || ligas == 0.0 || !ligas.is_finite() {
        return (255, 255, 255);
    }
    let t = (ligas.abs() / max_abs).min(1.0);
    let target = if ligas > 0.0 { GREEN } else { RED };
    let mix = |c: u8| (255.0 + t * (c as f64 - 255.0)).round() as u8;
    (mix(target.0), mix(target.1), mix(target.2))
}

/// One sentence as a `<div>`: a span per word and a legend row.
pub fn heatmap_fragment(record: &AttributionRecord) -> String {
    let max_abs = record.words.iter().map(|w| w.ligas.abs()).fold(0.0, f64::max);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<div style=\"margin:12px 0;font-family:sans-serif\" data-id=\"{}\">",
        escape_html(&record.id)
    );
    out.push_str("<div style=\"font-size:18px;line-height:1.8\">");
    for w in &record.words {
        let (r, g, b) = heat_color(w.ligas, max_abs);
        let _ = write!(
            out,
            "<span style=\"background-color:rgb({r},{g},{b});padding:2px 4px;margin:0 1px;border-radius:3px\" title=\"LIGAS={}\">{}</span>",
            w.ligas,
            escape_html(&w.text)
        );
    }
    out.push_str("</div>\n");
    let _ = writeln!(
        out,
        "<div style=\"font-size:12px;color:#444\">id {} | {} | gold {} | predicted {} (p={:.4}) | sentence LIGAS {:.6}</div>",
        escape_html(&record.id),
        record.category,
        record.gold,
        record.predicted,
        record.prob,
        record.sentence_ligas
    );
    out.push_str("</div>\n");
    out
}

/// Standalone HTML page with inline styles only.
pub fn heatmap_page(records: &[AttributionRecord], config_digest: &str) -> String {
    let mut out = String::from("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n");
    let _ = writeln!(out, "<!-- config_digest={config_digest} -->");
    out.push_str("<title>LIGAS heatmaps</title>\n</head>\n<body style=\"margin:24px\">\n");
    let (g, r) = (heat_color(1.0, 1.0), heat_color(-1.0, 1.0));
    let _ = writeln!(
        out,
        "<div style=\"font-family:sans-serif;font-size:12px\">\
         <span style=\"background-color:rgb({},{},{});padding:2px 6px\">positive</span> \
         <span style=\"background-color:rgb(255,255,255);padding:2px 6px;border:1px solid #ccc\">zero</span> \
         <span style=\"background-color:rgb({},{},{});padding:2px 6px\">negative</span> \
         toward the predicted class; intensity is |LIGAS| / max |LIGAS| within each sentence</div>",
        g.0, g.1, g.2, r.0, r.1, r.2
    );
    for rec in records {
        out.push_str(&heatmap_fragment(rec));
    }
    out.push_str("</body>\n</html>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::WordScore;
    use proptest::prelude::*;

    fn rec(cat: Category, o: Outcome, l: f64) -> SignRecord {
        SignRecord {
            category: cat,
            outcome: o,
            sentence_ligas: l,
        }
    }

    #[test]
    fn outcome_table() {
        assert_eq!(outcome(Label::LA, Label::LA), Outcome::CC);
        assert_eq!(outcome(Label::LUA, Label::LUA), Outcome::CC);
        assert_eq!(outcome(Label::LUA, Label::LA), Outcome::MC);
        assert_eq!(outcome(Label::LA, Label::LUA), Outcome::MC);
    }

    #[test]
    fn zero_is_non_positive() {
        let s = sign_stats(&[
            rec(Category::SVA, Outcome::CC, 0.0),
            rec(Category::SVA, Outcome::CC, 1e-300),
        ]);
        assert_eq!((s[0].cc_plus, s[0].cc_minus), (1, 1));
        assert_eq!(s[0].mc_plus_pct(), None);
    }

    #[test]
    fn empty_input() {
        assert!(sign_stats(&[]).is_empty());
        assert_eq!(aggregate_mc_positive(&[]), None);
    }

    #[test]
    fn aggregate_single_and_all_negative() {
        let recs = [
            rec(Category::RAA, Outcome::MC, 1.0),
            rec(Category::RAA, Outcome::MC, -1.0),
            rec(Category::RAA, Outcome::MC, -2.0),
        ];
        let s = sign_stats(&recs);
        assert_eq!(aggregate_mc_positive(&s), s[0].mc_plus_pct());
        let s = sign_stats(&recs[1..]);
        assert_eq!(aggregate_mc_positive(&s), Some(0.0));
    }

    #[test]
    fn csv_layout() {
        let s = sign_stats(&[
            rec(Category::CIA, Outcome::CC, 1.0),
            rec(Category::CIA, Outcome::CC, -1.0),
        ]);
        let csv = stats_csv(&s, "abc");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# config_digest=abc");
        assert_eq!(lines[1], STATS_HEADER);
        assert_eq!(lines[2], "CIA,2,2,0,1,1,0,0,50.00,");
        assert_eq!(parse_stats_csv(&csv).unwrap(), s);
    }

    #[test]
    fn two_decimal_display_rounds_ties_to_even() {
        assert_eq!(pct_cell(Some(0.125)), "0.12");
        assert_eq!(pct_cell(Some(0.375)), "0.38");
        assert_eq!(pct_cell(Some(100.0 * 144.0 / 162.0)), "88.89");
    }

    fn attribution(words: &[(&str, f64)], gold: Label, predicted: Label) -> AttributionRecord {
        AttributionRecord {
            id: "x".into(),
            category: Category::SVA,
            gold,
            predicted,
            prob: 0.75,
            sentence_ligas: words.iter().map(|w| w.1).sum(),
            completeness_gap: 0.0,
            words: words
                .iter()
                .map(|&(t, l)| WordScore {
                    text: t.into(),
                    ligas: l,
                })
                .collect(),
        }
    }

    #[test]
    fn scatter_splits_by_outcome() {
        let a = attribution(&[("a", 1.0)], Label::LA, Label::LA);
        let b = attribution(&[("b", -1.0)], Label::LA, Label::LUA);
        let c = attribution(&[("c", 2.0)], Label::LUA, Label::LUA);
        let s = scatter_export([&a, &b, &c]);
        assert_eq!(s.cc, vec![(0.75, 1.0), (0.75, 2.0)]);
        assert_eq!(s.mc.len(), 1);
        let csv = scatter_csv(&s.cc, "d");
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 3);
        assert_eq!(scatter_svg(&s.cc, "CC", "d").matches("<circle").count(), 2);
        let empty = scatter_export(std::iter::empty());
        assert_eq!(scatter_csv(&empty.mc, "d"), "# config_digest=d\nprob,ligas\n");
        assert_eq!(scatter_svg(&empty.mc, "MC", "d").matches("<circle").count(), 0);
    }

    #[test]
    fn heatmap_colors() {
        let r = attribution(
            &[("the", 0.1), ("dog", -0.4), ("barks", 0.8), ("<b>", 0.0), (".", 0.2)],
            Label::LA,
            Label::LA,
        );
        let html = heatmap_fragment(&r);
        assert_eq!(html.matches("<span").count(), 5);
        assert!(html.contains("rgb(0,170,0)"));
        assert!(html.contains("title=\"LIGAS=0.8\""));
        assert!(html.contains("&lt;b&gt;"));
        assert!(html.contains("predicted LA (p=0.7500)"));
        let zero = attribution(&[("a", 0.0), ("b", 0.0)], Label::LA, Label::LA);
        let html = heatmap_fragment(&zero);
        assert_eq!(html.matches("rgb(255,255,255)").count(), 2);
        assert_eq!(heat_color(-2.0, 2.0), RED);
        assert_eq!(heat_color(1.0, 2.0), (128, 213, 128));
    }

    #[test]
    fn magnitudes() {
        let la = attribution(&[("a", 1.0)], Label::LA, Label::LA);
        let lua = attribution(&[("a", -3.0)], Label::LUA, Label::LUA);
        let m = magnitude_by_label(&[la, lua]);
        assert_eq!(m.lua_over_la(), Some(3.0));
    }

    fn arb_record() -> impl Strategy<Value = SignRecord> {
        (0usize..5, any::<bool>(), -2.0f64..2.0, 0u8..8).prop_map(|(c, cc, l, z)| SignRecord {
            category: Category::ALL[c],
            outcome: if cc { Outcome::CC } else { Outcome::MC },
            sentence_ligas: if z == 0 { 0.0 } else { l },
        })
    }

    proptest! {
        #[test]
        fn count_identities(recs in prop::collection::vec(arb_record(), 0..200)) {
            let stats = sign_stats(&recs);
            prop_assert_eq!(stats.iter().map(|s| s.c).sum::<usize>(), recs.len());
            for s in &stats {
                prop_assert_eq!(s.c, s.cc + s.mc);
                prop_assert_eq!(s.cc, s.cc_plus + s.cc_minus);
                prop_assert_eq!(s.mc, s.mc_plus + s.mc_minus);
                if let Some(p) = s.cc_plus_pct() {
                    prop_assert!((0.0..=100.0).contains(&p));
                }
            }
        }

        #[test]
        fn permutation_invariant(mut recs in prop::collection::vec(arb_record(), 0..100), k in 0usize..100) {
            let before = sign_stats(&recs);
            let n = recs.len().max(1);
            recs.rotate_left(k % n);
            recs.reverse();
            prop_assert_eq!(sign_stats(&recs), before);
        }
    }
}
