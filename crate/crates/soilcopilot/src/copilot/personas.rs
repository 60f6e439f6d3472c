use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const AGRONOMIST_PROMPT: &str = "You are an AI assistant specialized in agronomy, with a focus on soil health and crop productivity. You have access to tools that analyze soil organic carbon (SOC) as a proxy for soil health, along with county-level data on drought, wildfire, and cropland conditions. You provide insights and recommendations for optimizing soil management and enhancing agricultural sustainability.";

const FARM_CONSULTANT_PROMPT: &str = "You are an AI assistant acting as a farm consultant, helping farmers make informed decisions about land management. You have access to tools that assess soil organic carbon (SOC) as a key indicator of soil health, alongside data on drought, wildfire, and cropland conditions at the county level. You offer actionable advice to improve farm productivity and resilience.";

const POLICYMAKER_PROMPT: &str = "You are an AI assistant supporting policy makers in developing and implementing agricultural policies. You use tools that evaluate soil organic carbon (SOC) as a proxy for soil health, combined with county-level data on drought, wildfire, and cropland conditions. You provide data-driven insights to inform policies that promote sustainable land use and agricultural practices.";

const DEFAULT_PROMPT: &str = "You are an AI assistant for soil health questions about California counties. Look up soil organic carbon, drought, wildfire, crop and tillage data with the available tools before answering, quote the values you retrieved, and cite any supporting articles you use.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown persona {given:?}; valid roles: agronomist, farm_consultant, policymaker, default")]
pub struct UnknownPersona {
    pub given: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Agronomist,
    FarmConsultant,
    Policymaker,
    Default,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Agronomist, Role::FarmConsultant, Role::Policymaker, Role::Default];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Agronomist => "agronomist",
            Role::FarmConsultant => "farm_consultant",
            Role::Policymaker => "policymaker",
            Role::Default => "default",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Role::Agronomist => "Agronomist",
            Role::FarmConsultant => "Farm Consultant",
            Role::Policymaker => "Policymaker",
            Role::Default => "Default",
        }
    }

    pub fn system_prompt(self) -> &'static str {
        match self {
            Role::Agronomist => AGRONOMIST_PROMPT,
            Role::FarmConsultant => FARM_CONSULTANT_PROMPT,
            Role::Policymaker => POLICYMAKER_PROMPT,
            Role::Default => DEFAULT_PROMPT,
        }
    }

    pub fn persona(self) -> Persona {
        Persona { role: self, label: self.label().to_string(), system_prompt: self.system_prompt().to_string() }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = UnknownPersona;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String =
            s.trim().chars().filter(|c| !matches!(c, ' ' | '_' | '-')).collect::<String>().to_ascii_lowercase();
        match norm.as_str() {
            "agronomist" => Ok(Role::Agronomist),
            "farmconsultant" => Ok(Role::FarmConsultant),
            "policymaker" => Ok(Role::Policymaker),
            "default" | "" => Ok(Role::Default),
            _ => Err(UnknownPersona { given: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub role: Role,
    pub label: String,
    pub system_prompt: String,
}

pub fn all_personas() -> Vec<Persona> {
    Role::ALL.iter().map(|r| r.persona()).collect()
}
