//! On-disk formats for corpora and mining tasks.
//!
//! Corpus files are UTF-8, one sentence per line. Mining tasks are stored as
//! two pool files of "id<TAB>sentence" lines plus a gold file of
//! "id_a<TAB>id_b" lines, mirroring the BUCC distribution format.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::synthlang::task::{MiningTask, Split};

pub fn write_corpus(path: &Path, sentences: &[String]) -> Result<()> {
    let mut out = String::new();
    for s in sentences {
        out.push_str(s);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?.lines().map(|l| l.to_string()).collect())
}

pub fn write_pool(path: &Path, pool: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (id, sentence) in pool {
        out.push_str(id);
        out.push('\t');
        out.push_str(sentence);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_pool(path: &Path) -> Result<Vec<(String, String)>> {
    fs::read_to_string(path)?
        .lines()
        .map(|line| {
            line.split_once('\t')
                .map(|(id, s)| (id.to_string(), s.to_string()))
                .ok_or_else(|| Error::format(format!("pool line without tab: {:?}", line)))
        })
        .collect()
}

pub fn write_gold(path: &Path, gold: &BTreeSet<(String, String)>) -> Result<()> {
    let mut out = String::new();
    for (a, b) in gold {
        out.push_str(a);
        out.push('\t');
        out.push_str(b);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_gold(path: &Path) -> Result<BTreeSet<(String, String)>> {
    fs::read_to_string(path)?
        .lines()
        .map(|line| {
            line.split_once('\t')
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .ok_or_else(|| Error::format(format!("gold line without tab: {:?}", line)))
        })
        .collect()
}

/// Write a task as `<stem>.a`, `<stem>.b` and `<stem>.gold` next to each other.
pub fn write_task(dir: &Path, stem: &str, task: &MiningTask) -> Result<()> {
    write_pool(&dir.join(format!("{}.a", stem)), &task.pool_a)?;
    write_pool(&dir.join(format!("{}.b", stem)), &task.pool_b)?;
    write_gold(&dir.join(format!("{}.gold", stem)), &task.gold)?;
    Ok(())
}

pub fn read_task(dir: &Path, stem: &str, split: Split) -> Result<MiningTask> {
    let task = MiningTask {
        pool_a: read_pool(&dir.join(format!("{}.a", stem)))?,
        pool_b: read_pool(&dir.join(format!("{}.b", stem)))?,
        gold: read_gold(&dir.join(format!("{}.gold", stem)))?,
        split,
    };
    task.validate()?;
    Ok(task)
}
