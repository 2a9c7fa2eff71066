use std::io;

use serde::{Deserialize, Serialize};

use crate::genotype::Genotype;

/// State after one fitness evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Fitness of the genotype evaluated in this generation.
    pub eval_fitness: f64,
    pub parent_fitness: f64,
    pub best_fitness: f64,
    pub sigma: f64,
    pub niching_active: bool,
    #[serde(rename = "genotype_bits")]
    pub genotype: Genotype,
}

/// Per-generation trace of a run, one record per evaluation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunHistory {
    records: Vec<GenerationRecord>,
    discard: bool,
}

impl RunHistory {
    /// A history that drops every record; for long statistical runs.
    pub fn discarding() -> Self {
        Self {
            records: Vec::new(),
            discard: true,
        }
    }

    pub(crate) fn push(&mut self, record: GenerationRecord) {
        if self.discard {
            return;
        }
        debug_assert!(self
            .records
            .last()
            .map_or(true, |last| last.generation < record.generation));
        self.records.push(record);
    }

    pub fn records(&self) -> &[GenerationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes the CSV trace with columns
    /// `generation,eval_fitness,parent_fitness,best_fitness,sigma,niching_active,genotype_bits`.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for record in &self.records {
            w.serialize(record)?;
        }
        if self.records.is_empty() {
            w.write_record([
                "generation",
                "eval_fitness",
                "parent_fitness",
                "best_fitness",
                "sigma",
                "niching_active",
                "genotype_bits",
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(reader: R) -> csv::Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let records = r.deserialize().collect::<Result<Vec<GenerationRecord>, _>>()?;
        Ok(Self {
            records,
            discard: false,
        })
    }
}
