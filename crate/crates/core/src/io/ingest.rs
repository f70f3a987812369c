//! CSV schemas (UTF-8, comma-delimited, header row required):
//!
//! - `students.csv`: `student_id,class_id,anxiety_raw`
//! - `friendships.csv`: `source_id,target_id`
//! - `questionnaire_judgments.csv`: `rater_id,target_id,valence`
//! - `scores.csv`: `student_id,score_1,...,score_T`
//!
//! Row numbers in errors are file line numbers (the header is line 1).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use log::warn;

use crate::domain::{AnxietyRange, ClassId, Cohort, ExamSeries, PeerJudgment, StudentId, StudentRecord};
use crate::error::{Error, Result};

pub const STUDENTS_FILE: &str = "students.csv";
pub const FRIENDSHIPS_FILE: &str = "friendships.csv";
pub const JUDGMENTS_FILE: &str = "questionnaire_judgments.csv";
pub const SCORES_FILE: &str = "scores.csv";

/// A loaded value plus the non-fatal issues found while loading it.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ScoreLoad {
    pub series: ExamSeries,
    /// Students dropped for having at least one blank score.
    pub excluded: Vec<StudentId>,
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn expect_header(rdr: &mut csv::Reader<File>, path: &Path, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers()?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::validation(format!(
            "{}: expected header {:?}, found {:?}",
            path.display(),
            expected,
            got
        )));
    }
    Ok(())
}

struct Row {
    line: usize,
    record: csv::StringRecord,
}

fn rows(rdr: &mut csv::Reader<File>) -> impl Iterator<Item = Result<Row>> + '_ {
    rdr.records().map(|r| {
        let record = r?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        Ok(Row { line, record })
    })
}

impl Row {
    fn field(&self, i: usize) -> &str {
        self.record.get(i).unwrap_or("")
    }

    fn id(&self, i: usize, name: &str) -> Result<StudentId> {
        self.field(i).parse::<u32>().map(StudentId).map_err(|_| Error::Parse {
            row: self.line,
            message: format!("{name} {:?} is not a student id", self.field(i)),
        })
    }

    fn number(&self, i: usize, name: &str) -> Result<Option<f64>> {
        let raw = self.field(i);
        if raw.is_empty() {
            return Ok(None);
        }
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(Error::Parse {
                row: self.line,
                message: format!("{name} {raw:?} is not a number"),
            }),
        }
    }
}

/// Loads and validates a cohort. `questionnaire` may be omitted.
pub fn load_cohort(
    students: &Path,
    friendships: &Path,
    questionnaire: Option<&Path>,
    range: AnxietyRange,
) -> Result<Loaded<Cohort>> {
    let mut warnings = Vec::new();
    let mut warn_once = |msg: String| {
        warn!("{msg}");
        warnings.push(msg);
    };

    let mut rdr = reader(students)?;
    expect_header(&mut rdr, students, &["student_id", "class_id", "anxiety_raw"])?;
    let mut records: BTreeMap<StudentId, StudentRecord> = BTreeMap::new();
    for row in rows(&mut rdr) {
        let row = row?;
        let id = row.id(0, "student_id")?;
        let class = row.field(1);
        if class.is_empty() {
            return Err(Error::Parse {
                row: row.line,
                message: "class_id is empty".into(),
            });
        }
        let anxiety_raw = match row.number(2, "anxiety_raw")? {
            Some(a) => a,
            None => {
                warn_once(format!(
                    "student {id}: missing anxiety, using range midpoint {}",
                    range.midpoint()
                ));
                range.midpoint()
            }
        };
        let record = StudentRecord {
            id,
            class_id: ClassId(class.to_string()),
            friends: Vec::new(),
            anxiety_raw,
            peer_judgments: Vec::new(),
        };
        if records.insert(id, record).is_some() {
            return Err(Error::Parse {
                row: row.line,
                message: format!("duplicate student id {id}"),
            });
        }
    }

    let mut unknown = BTreeSet::new();
    let mut rdr = reader(friendships)?;
    expect_header(&mut rdr, friendships, &["source_id", "target_id"])?;
    let mut seen = BTreeSet::new();
    for row in rows(&mut rdr) {
        let row = row?;
        let (a, b) = (row.id(0, "source_id")?, row.id(1, "target_id")?);
        if a == b {
            return Err(Error::Parse {
                row: row.line,
                message: format!("self-tie for student {a}"),
            });
        }
        for id in [a, b] {
            if !records.contains_key(&id) {
                unknown.insert(id);
            }
        }
        if !seen.insert((a, b)) {
            warn_once(format!("duplicate tie ({a}, {b}) at row {} ignored", row.line));
            continue;
        }
        if let Some(r) = records.get_mut(&a) {
            r.friends.push(b);
        }
    }

    if let Some(path) = questionnaire {
        let mut rdr = reader(path)?;
        expect_header(&mut rdr, path, &["rater_id", "target_id", "valence"])?;
        for row in rows(&mut rdr) {
            let row = row?;
            let (a, b) = (row.id(0, "rater_id")?, row.id(1, "target_id")?);
            let valence = row.number(2, "valence")?.ok_or_else(|| Error::Parse {
                row: row.line,
                message: "valence is empty".into(),
            })?;
            for id in [a, b] {
                if !records.contains_key(&id) {
                    unknown.insert(id);
                }
            }
            if let Some(r) = records.get_mut(&a) {
                r.peer_judgments.push(PeerJudgment { target: b, valence });
            }
        }
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownStudents(unknown.into_iter().collect()));
    }

    Ok(Loaded {
        value: Cohort::new(records.into_values().collect(), range)?,
        warnings,
    })
}

/// Loads wide-format scores. With `epochs = None` the count is read from
/// the header.
pub fn load_scores(path: &Path, epochs: Option<usize>) -> Result<ScoreLoad> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let t = epochs.unwrap_or(header.len().saturating_sub(1));
    let mut expected = vec!["student_id".to_string()];
    expected.extend((1..=t).map(|i| format!("score_{i}")));
    if t == 0 || header != expected {
        return Err(Error::validation(format!(
            "{}: expected header {:?}, found {:?}",
            path.display(),
            expected,
            header
        )));
    }
    let mut complete = BTreeMap::new();
    let mut excluded = Vec::new();
    for row in rows(&mut rdr) {
        let row = row?;
        let id = row.id(0, "student_id")?;
        let scores = (1..=t)
            .map(|i| row.number(i, &format!("score_{i}")))
            .collect::<Result<Vec<_>>>()?;
        if complete.contains_key(&id) || excluded.contains(&id) {
            return Err(Error::Parse {
                row: row.line,
                message: format!("duplicate student id {id}"),
            });
        }
        match scores.into_iter().collect::<Option<Vec<f64>>>() {
            Some(s) => {
                complete.insert(id, s);
            }
            None => {
                warn!("student {id}: incomplete score record, excluded");
                excluded.push(id);
            }
        }
    }
    Ok(ScoreLoad {
        series: ExamSeries::new(t, complete)?,
        excluded,
    })
}

/// Restricts a cohort to students with complete score records.
pub fn full_temporal(cohort: &Cohort, series: &ExamSeries) -> Result<Cohort> {
    let keep: BTreeSet<StudentId> = cohort.ids().filter(|id| series.rows().contains_key(id)).collect();
    cohort.restrict(&keep)
}

/// Writes the three cohort files into `dir`.
pub fn save_cohort(cohort: &Cohort, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = writer(&dir.join(STUDENTS_FILE))?;
    w.write_record(["student_id", "class_id", "anxiety_raw"])?;
    for s in cohort.students() {
        w.write_record([s.id.to_string(), s.class_id.0.clone(), s.anxiety_raw.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(dir.join(STUDENTS_FILE), e))?;

    let mut w = writer(&dir.join(FRIENDSHIPS_FILE))?;
    w.write_record(["source_id", "target_id"])?;
    for s in cohort.students() {
        for f in &s.friends {
            w.write_record([s.id.to_string(), f.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(dir.join(FRIENDSHIPS_FILE), e))?;

    let mut w = writer(&dir.join(JUDGMENTS_FILE))?;
    w.write_record(["rater_id", "target_id", "valence"])?;
    for s in cohort.students() {
        for j in &s.peer_judgments {
            w.write_record([s.id.to_string(), j.target.to_string(), j.valence.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(dir.join(JUDGMENTS_FILE), e))?;
    Ok(())
}

pub fn save_scores(series: &ExamSeries, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["student_id".to_string()];
    header.extend((1..=series.epochs()).map(|i| format!("score_{i}")));
    w.write_record(&header)?;
    for (id, scores) in series.rows() {
        let mut row = vec![id.to_string()];
        row.extend(scores.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Loads `students.csv`, `friendships.csv`, the optional judgments file and
/// `scores.csv` from one directory, keeping only complete score records.
pub fn load_dir(dir: &Path, range: AnxietyRange) -> Result<(Loaded<Cohort>, ScoreLoad)> {
    let judgments = dir.join(JUDGMENTS_FILE);
    let cohort = load_cohort(
        &dir.join(STUDENTS_FILE),
        &dir.join(FRIENDSHIPS_FILE),
        judgments.exists().then_some(judgments.as_path()),
        range,
    )?;
    let scores = load_scores(&dir.join(SCORES_FILE), None)?;
    Ok((cohort, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn three_row_fixture() {
        let d = tempfile::tempdir().unwrap();
        let s = write(
            d.path(),
            "s.csv",
            "student_id,class_id,anxiety_raw\n1,A,2\n2,A,3\n3,A,4\n",
        );
        let f = write(d.path(), "f.csv", "source_id,target_id\n1,2\n2,1\n");
        let c = load_cohort(&s, &f, None, AnxietyRange::default()).unwrap();
        assert_eq!(c.value.len(), 3);
        assert_eq!(c.value.social_observed().len(), 2);
        assert!(c.warnings.is_empty());
    }

    #[test]
    fn unknown_friend_is_named() {
        let d = tempfile::tempdir().unwrap();
        let s = write(d.path(), "s.csv", "student_id,class_id,anxiety_raw\n1,A,2\n2,A,3\n");
        let f = write(d.path(), "f.csv", "source_id,target_id\n1,999\n");
        let err = load_cohort(&s, &f, None, AnxietyRange::default()).unwrap_err();
        assert!(matches!(&err, Error::UnknownStudents(ids) if ids == &[StudentId(999)]));
        assert!(err.to_string().contains("999"));
    }

    #[test]
    fn duplicate_ties_and_missing_anxiety_warn() {
        let d = tempfile::tempdir().unwrap();
        let s = write(d.path(), "s.csv", "student_id,class_id,anxiety_raw\n1,A,\n2,A,3\n");
        let f = write(d.path(), "f.csv", "source_id,target_id\n1,2\n1,2\n");
        let c = load_cohort(&s, &f, None, AnxietyRange::default()).unwrap();
        assert_eq!(c.warnings.len(), 2);
        assert_eq!(c.value.record(StudentId(1)).unwrap().friends, vec![StudentId(2)]);
        assert_eq!(c.value.record(StudentId(1)).unwrap().anxiety_raw, 3.0);
    }

    #[test]
    fn scores_blank_cell_and_bad_number() {
        let d = tempfile::tempdir().unwrap();
        let p = write(
            d.path(),
            "sc.csv",
            "student_id,score_1,score_2\n1,50,60\n2,,70\n3,80,81\n",
        );
        let load = load_scores(&p, Some(2)).unwrap();
        assert_eq!(load.excluded, vec![StudentId(2)]);
        assert_eq!(load.series.epochs(), 2);
        assert_eq!(load.series.rows().len(), 2);

        let mut body = String::from("student_id,score_1\n");
        for i in 0..5 {
            body.push_str(&format!("{i},1\n"));
        }
        body.push_str("9,abc\n");
        let p = write(d.path(), "bad.csv", &body);
        match load_scores(&p, None).unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 7),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn header_mismatch_is_validation() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "sc.csv", "id,score_1\n1,2\n");
        assert!(load_scores(&p, None).unwrap_err().is_validation());
    }
}
