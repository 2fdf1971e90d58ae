use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use nrgboost::data::{ColumnHints, FeatureKind, RawTable};
use nrgboost::model_file::ModelFile;

use crate::args::DataArgs;

pub fn read_table(path: &Path) -> Result<RawTable> {
    RawTable::from_csv_path(path).with_context(|| format!("reading {}", path.display()))
}

/// Training table with dropped columns removed, plus the type hints.
pub fn training_table(args: &DataArgs) -> Result<(RawTable, ColumnHints)> {
    let mut table = read_table(&args.data)?;
    if !args.drop.is_empty() {
        let keep: Vec<usize> = (0..table.headers.len())
            .filter(|&i| !args.drop.contains(&table.headers[i]))
            .collect();
        for name in &args.drop {
            table.column_index(name)?;
        }
        table.headers = keep.iter().map(|&i| table.headers[i].clone()).collect();
        for row in &mut table.rows {
            if row.len() == keep.len() + args.drop.len() {
                *row = keep.iter().map(|&i| std::mem::take(&mut row[i])).collect();
            }
        }
    }
    let mut hints = ColumnHints::new();
    for name in &args.categorical {
        hints.insert(name.clone(), FeatureKind::Categorical);
    }
    for name in &args.numeric {
        if hints
            .insert(name.clone(), FeatureKind::OrderedNumeric)
            .is_some()
        {
            anyhow::bail!("column `{name}` is both categorical and numeric");
        }
    }
    Ok((table, hints))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::load(path).with_context(|| format!("loading model {}", path.display()))
}

pub fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn csv_writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    Ok(csv::Writer::from_writer(output(path)?))
}

pub fn seed_or_random(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

pub fn read_config(path: Option<&Path>) -> Result<Option<String>> {
    path.map(|p| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))
        .transpose()
}
