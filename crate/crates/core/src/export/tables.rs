//! CSV tables of trajectories and scores.

use std::str::FromStr;

use crate::sim::Trajectory;

use super::bundle::AnalysisBundle;
use super::number::format_number;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvSelector {
    Trajectories,
    LinkScores,
    LoopScores,
}

impl CsvSelector {
    pub const ALL: [CsvSelector; 3] = [CsvSelector::Trajectories, CsvSelector::LinkScores, CsvSelector::LoopScores];

    pub fn name(self) -> &'static str {
        match self {
            CsvSelector::Trajectories => "trajectories",
            CsvSelector::LinkScores => "link_scores",
            CsvSelector::LoopScores => "loop_scores",
        }
    }
}

impl FromStr for CsvSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CsvSelector::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown table `{s}`"))
    }
}

/// Writes a `time` column followed by `columns`, one row per entry of
/// `times`.
fn table(times: &[f64], columns: &[(String, &[f64])]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("time").chain(columns.iter().map(|(n, _)| n.as_str()));
    w.write_record(header).expect("writing to memory");
    for (k, t) in times.iter().enumerate() {
        let row = std::iter::once(format_number(*t)).chain(columns.iter().map(|(_, s)| format_number(s[k])));
        w.write_record(row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}

/// One row per time point, one column per variable in model order.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let series: Vec<Vec<f64>> = (0..traj.names.len())
        .map(|i| traj.states.iter().map(|s| s[i]).collect())
        .collect();
    let columns: Vec<(String, &[f64])> = traj.names.iter().cloned().zip(series.iter().map(Vec::as_slice)).collect();
    table(&traj.times, &columns)
}

pub fn export_csv(bundle: &AnalysisBundle, selector: CsvSelector) -> String {
    match selector {
        CsvSelector::Trajectories => {
            let columns: Vec<(String, &[f64])> = bundle
                .model
                .variables
                .iter()
                .filter_map(|v| bundle.trajectories.get(&v.name).map(|s| (v.name.clone(), s.as_slice())))
                .collect();
            table(&bundle.times, &columns)
        }
        CsvSelector::LinkScores => {
            let mut columns: Vec<(String, &[f64])> = Vec::new();
            for l in &bundle.links {
                let key = format!("{}->{}", l.source, l.target);
                columns.push((key.clone(), &l.scores));
                columns.push((format!("{key} relative"), &l.relative));
            }
            table(&bundle.times[1..], &columns)
        }
        CsvSelector::LoopScores => {
            if bundle.loops.is_empty() {
                return table(&[], &[]);
            }
            let mut columns: Vec<(String, &[f64])> = Vec::new();
            for row in &bundle.dominance_profile {
                if let Some(l) = bundle.loop_info(&row.loop_id) {
                    columns.push((l.id.clone(), &l.scores));
                    columns.push((format!("{} relative", l.id), &l.relative));
                }
            }
            table(&bundle.times[1..], &columns)
        }
    }
}

/// Parses a table written by this module back into its header and columns.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), csv::Error> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let mut columns = vec![Vec::new(); header.len()];
    for record in r.records() {
        for (col, field) in columns.iter_mut().zip(record?.iter()) {
            col.push(field.parse().unwrap_or(f64::NAN));
        }
    }
    Ok((header, columns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_inflow_trajectory() {
        let traj = Trajectory {
            times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            names: vec!["s".into()],
            states: vec![vec![0.0], vec![0.25], vec![0.5], vec![0.75], vec![1.0]],
        };
        assert_eq!(trajectory_csv(&traj), "time,s\n0,0\n0.25,0.25\n0.5,0.5\n0.75,0.75\n1,1\n");
    }

    #[test]
    fn awkward_names_are_quoted() {
        let text = table(&[0.0], &[("a,\"b\"".to_string(), &[1.0][..])]);
        assert_eq!(text, "time,\"a,\"\"b\"\"\"\n0,1\n");
        let (header, cols) = parse_csv(&text).unwrap();
        assert_eq!(header[1], "a,\"b\"");
        assert_eq!(cols[1], vec![1.0]);
    }

    #[test]
    fn selector_names() {
        for s in CsvSelector::ALL {
            assert_eq!(s.name().parse::<CsvSelector>(), Ok(s));
        }
        assert!("nope".parse::<CsvSelector>().is_err());
    }
}
