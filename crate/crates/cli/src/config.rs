//! `key = value` config files, merged below explicit command-line flags.

use std::ffi::OsString;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Command};

use crate::failure::{Failure, Stage};

/// Settings the config file contributes to a run.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct ConfigOverlay {
    /// Extra arguments appended to the command line.
    pub args: Vec<OsString>,
    /// `sensor.<field>` entries, applied before any `--sensor-set`.
    pub sensor_fields: Vec<(String, String)>,
}

pub fn parse(text: &str) -> Result<Vec<(String, String)>, Failure> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Failure::new("config", "config", format!("line {}: expected `key = value`", lineno + 1)));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Failure::new("config", "config", format!("line {}: empty key", lineno + 1)));
        }
        entries.push((key.to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>, Failure> {
    parse(&std::fs::read_to_string(path).stage("config")?)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, Failure> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Failure::new("config", "config", format!("{key}: '{value}' is not a boolean"))),
    }
}

fn find_arg<'a>(cmd: &'a Command, id: &str) -> Option<&'a clap::Arg> {
    cmd.get_arguments().find(|a| a.get_id().as_str() == id && a.get_long().is_some())
}

/// Turns config entries into extra arguments for every setting the command
/// line and environment left at its default.
pub fn overlay(cmd: &Command, matches: &ArgMatches, entries: &[(String, String)]) -> Result<ConfigOverlay, Failure> {
    let (sub_name, sub_matches) = matches
        .subcommand()
        .ok_or_else(|| Failure::new("config", "config", "no subcommand"))?;
    let sub_cmd = cmd.find_subcommand(sub_name).expect("parsed subcommand exists");
    let mut out = ConfigOverlay::default();

    for (raw_key, value) in entries {
        let mut key = raw_key.as_str();
        if let Some((prefix, rest)) = key.split_once('.') {
            if prefix == "sensor" {
                if sub_name == "simulate" {
                    out.sensor_fields.push((rest.to_string(), value.clone()));
                }
                continue;
            }
            if cmd.find_subcommand(prefix).is_none() {
                return Err(Failure::new("config", "config", format!("unknown section '{prefix}' in key '{raw_key}'")));
            }
            if prefix != sub_name {
                continue;
            }
            key = rest;
        }
        let id = key.replace('-', "_");
        if id == "config" || id == "verbose" {
            return Err(Failure::new("config", "config", format!("'{key}' cannot be set from a config file")));
        }
        let (arg, source) = if let Some(a) = find_arg(cmd, &id) {
            (a, matches.value_source(&id))
        } else if let Some(a) = find_arg(sub_cmd, &id) {
            (a, sub_matches.value_source(&id))
        } else if cmd.get_subcommands().any(|s| find_arg(s, &id).is_some()) {
            continue;
        } else {
            return Err(Failure::new("config", "config", format!("unknown key '{raw_key}'")));
        };
        if matches!(source, Some(ValueSource::CommandLine) | Some(ValueSource::EnvVariable)) {
            continue;
        }
        let long = arg.get_long().expect("filtered to long flags");
        match arg.get_action() {
            ArgAction::SetTrue => {
                if parse_bool(raw_key, value)? {
                    out.args.push(format!("--{long}").into());
                }
            }
            _ => out.args.push(format!("--{long}={value}").into()),
        }
    }
    Ok(out)
}
