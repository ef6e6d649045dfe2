//! Aligned sentence pairs with provenance.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a language in a two-language setup. `0` is the
/// high-resource side, `1` the low-resource side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Lang(pub u8);

impl Lang {
    pub const HIGH: Lang = Lang(0);
    pub const LOW: Lang = Lang(1);

    pub fn other(self) -> Lang {
        Lang(1 - self.0)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Direction {
    pub src: Lang,
    pub tgt: Lang,
}

impl Direction {
    pub const HIGH_TO_LOW: Direction = Direction { src: Lang::HIGH, tgt: Lang::LOW };
    pub const LOW_TO_HIGH: Direction = Direction { src: Lang::LOW, tgt: Lang::HIGH };

    pub fn reverse(self) -> Direction {
        Direction { src: self.tgt, tgt: self.src }
    }

    /// 0 for high→low, 1 for low→high.
    pub fn index(self) -> usize {
        self.src.index()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Authentic,
    PseudoSmt,
    PseudoNmt,
    OnlineBt,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Authentic => "authentic",
            Provenance::PseudoSmt => "pseudo-smt",
            Provenance::PseudoNmt => "pseudo-nmt",
            Provenance::OnlineBt => "online-bt",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "authentic" => Provenance::Authentic,
            "pseudo-smt" => Provenance::PseudoSmt,
            "pseudo-nmt" => Provenance::PseudoNmt,
            "online-bt" => Provenance::OnlineBt,
            other => return Err(Error::format("provenance", other.to_owned())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub source: String,
    pub target: String,
    pub provenance: Provenance,
}

/// A corpus of pairs sharing one translation direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitext {
    pub direction: Direction,
    pub pairs: Vec<Pair>,
}

impl Bitext {
    pub fn new(direction: Direction) -> Self {
        Bitext { direction, pairs: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn push(&mut self, source: String, target: String, provenance: Provenance) {
        self.pairs.push(Pair { source, target, provenance });
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|p| p.source.as_str())
    }

    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|p| p.target.as_str())
    }

    /// Writes `<stem>.src`, `<stem>.tgt` and `<stem>.prov`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let join = |it: &mut dyn Iterator<Item = &str>| it.map(|l| format!("{l}\n")).collect::<String>();
        fs::write(dir.join(format!("{stem}.src")), join(&mut self.sources()))?;
        fs::write(dir.join(format!("{stem}.tgt")), join(&mut self.targets()))?;
        fs::write(
            dir.join(format!("{stem}.prov")),
            join(&mut self.pairs.iter().map(|p| p.provenance.as_str())),
        )?;
        Ok(())
    }

    pub fn read(dir: &Path, stem: &str, direction: Direction) -> Result<Self> {
        let src = fs::read_to_string(dir.join(format!("{stem}.src")))?;
        let tgt = fs::read_to_string(dir.join(format!("{stem}.tgt")))?;
        let prov = fs::read_to_string(dir.join(format!("{stem}.prov")))?;
        let (src, tgt, prov): (Vec<_>, Vec<_>, Vec<_>) = (src.lines().collect(), tgt.lines().collect(), prov.lines().collect());
        if src.len() != tgt.len() || src.len() != prov.len() {
            return Err(Error::format(
                "bitext",
                format!("{stem}: {} / {} / {} lines", src.len(), tgt.len(), prov.len()),
            ));
        }
        let mut b = Bitext::new(direction);
        for ((s, t), p) in src.into_iter().zip(tgt).zip(prov) {
            b.push(s.to_owned(), t.to_owned(), p.parse()?);
        }
        Ok(b)
    }
}
