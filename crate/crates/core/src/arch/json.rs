//! Architecture JSON: `{"space": "s0"|"nb201"|"s2_cifar"|"s2_imagenet", "desc": ...}`
//! where `desc` is `[d1, d2, d3]` for S0, the cell string for NB201 and
//! `{"stem_channels": .., "stages": [{"block", "kernel", "channels", "depth",
//! "stride"}, ..]}` for S2. The schema ships as `docs/arch.schema.json`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{parse_nb201, serialize_nb201, ArchDescriptor, S2Config, SpaceKind};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchJson {
    pub space: SpaceKind,
    pub desc: Value,
}

impl ArchJson {
    pub fn from_descriptor(space: SpaceKind, desc: &ArchDescriptor) -> Result<Self> {
        let value = match (space, desc) {
            (SpaceKind::S0, ArchDescriptor::S0 { depths }) => serde_json::to_value(depths)?,
            (SpaceKind::Nb201, ArchDescriptor::Nb201(cell)) => Value::String(serialize_nb201(cell)),
            (SpaceKind::S2Cifar | SpaceKind::S2Imagenet, ArchDescriptor::S2(cfg)) => serde_json::to_value(cfg)?,
            (space, desc) => {
                return Err(Error::InvalidArch(format!("descriptor {desc} does not belong to space {space}")))
            }
        };
        Ok(ArchJson { space, desc: value })
    }

    pub fn to_descriptor(&self) -> Result<ArchDescriptor> {
        match self.space {
            SpaceKind::S0 => {
                let depths: [usize; 3] = serde_json::from_value(self.desc.clone())?;
                Ok(ArchDescriptor::S0 { depths })
            }
            SpaceKind::Nb201 => match &self.desc {
                Value::String(s) => Ok(ArchDescriptor::Nb201(parse_nb201(s)?)),
                other => Err(Error::parse(other.to_string(), "NB201 desc must be a cell string")),
            },
            SpaceKind::S2Cifar | SpaceKind::S2Imagenet => {
                let cfg: S2Config = serde_json::from_value(self.desc.clone())?;
                Ok(ArchDescriptor::S2(cfg))
            }
        }
    }

    pub fn parse(text: &str) -> Result<(SpaceKind, ArchDescriptor)> {
        let j: ArchJson = serde_json::from_str(text)?;
        let d = j.to_descriptor()?;
        Ok((j.space, d))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("architecture JSON serializes")
    }
}
