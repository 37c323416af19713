//! Requirement modeling.
//!
//! Turns a free-text streaming requirement plus a few facts about the home
//! uplink into the three throughput requirements every candidate is judged
//! against:
//!
//! * R1, the minimum throughput the streaming flow needs,
//! * R2, the maximum throughput it may take from the shared uplink,
//! * R3, the persistent-loss threshold above which the customized algorithm
//!   must behave exactly like the algorithm it was derived from.
//!
//! The parser is keyword driven and the bitrate lookup is a plain data table
//! (`assets/bitrate_table.txt`), so the same input always yields the same
//! requirements. An LLM-assisted parser that produces the same
//! [`StreamingSpec`] is available through [`parse_streaming_spec_with_llm`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::{ChatClient, ChatMessage, ChatRequest};

/// Default R3 threshold.
pub const DEFAULT_LOSS_THRESHOLD: f64 = 0.05;

/// Default fraction of the uplink the streaming flow may use.
pub const DEFAULT_SHARE_FRACTION: f64 = 0.5;

const BITRATE_TABLE: &str = include_str!("../assets/bitrate_table.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RequirementError {
    #[error("invalid streaming requirement: {0}")]
    InvalidSpec(String),
    #[error("invalid home network: {0}")]
    InvalidNetwork(String),
    #[error(
        "infeasible requirements: streaming needs at least {min_mbps} Mbps but only \
         {max_mbps} Mbps of the uplink may be used; lower the streaming quality or \
         raise the upload speed / share"
    )]
    InfeasibleRequirements { min_mbps: f64, max_mbps: f64 },
    #[error("invalid requirement set: {0}")]
    InvalidRequirements(String),
    #[error("bitrate table line {line}: {reason}")]
    BadTable { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ResolutionClass {
    Sd,
    Hd,
    #[serde(rename = "FHD_1080p")]
    Fhd1080p,
    #[serde(rename = "QHD_2K")]
    Qhd2k,
    #[serde(rename = "UHD_4K")]
    Uhd4k,
}

impl ResolutionClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ResolutionClass::Sd => "SD",
            ResolutionClass::Hd => "HD",
            ResolutionClass::Fhd1080p => "FHD_1080p",
            ResolutionClass::Qhd2k => "QHD_2K",
            ResolutionClass::Uhd4k => "UHD_4K",
        }
    }
}

impl fmt::Display for ResolutionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResolutionClass {
    type Err = RequirementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SD" => Ok(ResolutionClass::Sd),
            "HD" => Ok(ResolutionClass::Hd),
            "FHD_1080P" | "FHD" | "1080P" => Ok(ResolutionClass::Fhd1080p),
            "QHD_2K" | "QHD" | "2K" | "1440P" => Ok(ResolutionClass::Qhd2k),
            "UHD_4K" | "UHD" | "4K" | "2160P" => Ok(ResolutionClass::Uhd4k),
            other => Err(RequirementError::InvalidSpec(format!("unknown resolution class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Codec {
    H264,
    H265,
    Unknown,
}

impl Codec {
    pub fn as_str(self) -> &'static str {
        match self {
            Codec::H264 => "H264",
            Codec::H265 => "H265",
            Codec::Unknown => "UNKNOWN",
        }
    }
}

impl FromStr for Codec {
    type Err = RequirementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('.', "").as_str() {
            "H264" | "AVC" => Ok(Codec::H264),
            "H265" | "HEVC" => Ok(Codec::H265),
            "UNKNOWN" | "" => Ok(Codec::Unknown),
            other => Err(RequirementError::InvalidSpec(format!("unknown codec `{other}`"))),
        }
    }
}

/// Frame-rate bucket used as a bitrate table key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FpsBucket {
    /// Frame rate absent or at most 30 fps.
    Fps30,
    /// Frame rate above 30 fps.
    Fps60,
}

impl FpsBucket {
    pub fn of(frame_rate: Option<f64>) -> Self {
        match frame_rate {
            Some(fps) if fps > 30.0 => FpsBucket::Fps60,
            _ => FpsBucket::Fps30,
        }
    }
}

/// A parsed streaming requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamingSpec {
    pub raw_text: String,
    /// Always set when `explicit_bitrate_mbps` is absent.
    pub resolution_class: Option<ResolutionClass>,
    pub frame_rate: Option<f64>,
    pub codec: Option<Codec>,
    pub explicit_bitrate_mbps: Option<f64>,
    /// Set when nothing in the text was recognized and HD was assumed.
    #[serde(default)]
    pub assumed_default: bool,
}

impl StreamingSpec {
    pub fn validate(&self) -> Result<(), RequirementError> {
        if self.raw_text.trim().is_empty() {
            return Err(RequirementError::InvalidSpec("empty streaming requirement".into()));
        }
        if self.explicit_bitrate_mbps.is_none() && self.resolution_class.is_none() {
            return Err(RequirementError::InvalidSpec(
                "either a resolution class or an explicit bitrate is required".into(),
            ));
        }
        if let Some(fps) = self.frame_rate {
            if !(fps.is_finite() && fps > 0.0) {
                return Err(RequirementError::InvalidSpec(format!("frame rate must be positive, got {fps}")));
            }
        }
        if let Some(rate) = self.explicit_bitrate_mbps {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(RequirementError::InvalidSpec(format!("bitrate must be positive, got {rate}")));
            }
        }
        Ok(())
    }
}

/// Facts about the home uplink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomeNetwork {
    pub upload_speed_mbps: f64,
    #[serde(default = "default_share")]
    pub share_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_rtt_ms: Option<f64>,
}

fn default_share() -> f64 {
    DEFAULT_SHARE_FRACTION
}

impl HomeNetwork {
    pub fn new(upload_speed_mbps: f64) -> Result<Self, RequirementError> {
        Self::with_share(upload_speed_mbps, DEFAULT_SHARE_FRACTION)
    }

    pub fn with_share(upload_speed_mbps: f64, share_fraction: f64) -> Result<Self, RequirementError> {
        let net = HomeNetwork { upload_speed_mbps, share_fraction, nominal_rtt_ms: None };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<(), RequirementError> {
        if !(self.upload_speed_mbps.is_finite() && self.upload_speed_mbps > 0.0) {
            return Err(RequirementError::InvalidNetwork(format!(
                "upload speed must be positive, got {}",
                self.upload_speed_mbps
            )));
        }
        if !(self.share_fraction > 0.0 && self.share_fraction <= 1.0) {
            return Err(RequirementError::InvalidNetwork(format!(
                "share fraction must be in (0, 1], got {}",
                self.share_fraction
            )));
        }
        if let Some(rtt) = self.nominal_rtt_ms {
            if !(rtt.is_finite() && rtt > 0.0) {
                return Err(RequirementError::InvalidNetwork(format!("nominal RTT must be positive, got {rtt}")));
            }
        }
        Ok(())
    }
}

/// The R1/R2/R3 triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequirementSet {
    pub r1_min_throughput_mbps: f64,
    pub r2_max_throughput_mbps: f64,
    #[serde(default = "default_loss_threshold")]
    pub r3_loss_threshold: f64,
}

fn default_loss_threshold() -> f64 {
    DEFAULT_LOSS_THRESHOLD
}

impl RequirementSet {
    pub fn new(min_mbps: f64, max_mbps: f64, loss_threshold: f64) -> Result<Self, RequirementError> {
        let reqs = RequirementSet {
            r1_min_throughput_mbps: min_mbps,
            r2_max_throughput_mbps: max_mbps,
            r3_loss_threshold: loss_threshold,
        };
        reqs.validate()?;
        Ok(reqs)
    }

    pub fn validate(&self) -> Result<(), RequirementError> {
        let (r1, r2, r3) = (self.r1_min_throughput_mbps, self.r2_max_throughput_mbps, self.r3_loss_threshold);
        if !(r1.is_finite() && r2.is_finite() && r1 > 0.0) {
            return Err(RequirementError::InvalidRequirements(format!("R1 must be positive, got {r1}")));
        }
        if r1 > r2 {
            return Err(RequirementError::InfeasibleRequirements { min_mbps: r1, max_mbps: r2 });
        }
        if !(r3 > 0.0 && r3 < 1.0) {
            return Err(RequirementError::InvalidRequirements(format!("R3 threshold must be in (0, 1), got {r3}")));
        }
        Ok(())
    }

    /// Also checks R2 against the uplink it was derived from.
    pub fn validate_for(&self, net: &HomeNetwork) -> Result<(), RequirementError> {
        self.validate()?;
        if self.r2_max_throughput_mbps > net.upload_speed_mbps {
            return Err(RequirementError::InvalidRequirements(format!(
                "R2 {} Mbps exceeds the {} Mbps uplink",
                self.r2_max_throughput_mbps, net.upload_speed_mbps
            )));
        }
        Ok(())
    }
}

struct Patterns {
    fps: Regex,
    bitrate: Regex,
    h265: Regex,
    h264: Regex,
    uhd: Regex,
    qhd: Regex,
    fhd: Regex,
    hd: Regex,
    sd: Regex,
}

fn patterns() -> &'static Patterns {
    static PATTERNS: OnceLock<Patterns> = OnceLock::new();
    PATTERNS.get_or_init(|| Patterns {
        fps: Regex::new(r"(\d+(?:\.\d+)?)\s*(?:fps|hz|frames?\s*(?:per|/)\s*s(?:ec(?:ond)?)?)\b").unwrap(),
        bitrate: Regex::new(r"(\d+(?:\.\d+)?)\s*(mbps|mbit/s|mb/s|kbps|kbit/s|kb/s)\b").unwrap(),
        h265: Regex::new(r"\b(?:h\.?265|hevc|x265)\b").unwrap(),
        h264: Regex::new(r"\b(?:h\.?264|avc|x264)\b").unwrap(),
        uhd: Regex::new(r"\b(?:4k|2160p?|uhd|ultra\s*hd)\b").unwrap(),
        qhd: Regex::new(r"\b(?:2k|1440p?|qhd|quad\s*hd)\b").unwrap(),
        fhd: Regex::new(r"\b(?:1080[pi]?|fhd|full\s*hd)\b").unwrap(),
        hd: Regex::new(r"\b(?:720p?|hd)\b").unwrap(),
        sd: Regex::new(r"\b(?:sd|480p?|360p?|standard\s*definition)\b").unwrap(),
    })
}

/// Parses a free-text streaming requirement.
///
/// Unrecognized text falls back to HD with `assumed_default` set.
pub fn parse_streaming_spec(raw_text: &str) -> Result<StreamingSpec, RequirementError> {
    if raw_text.trim().is_empty() {
        return Err(RequirementError::InvalidSpec("empty streaming requirement".into()));
    }
    let text = raw_text.to_lowercase();
    let p = patterns();

    // Most specific classes first: "full hd" and "uhd" both contain "hd".
    let resolution_class = if p.uhd.is_match(&text) {
        Some(ResolutionClass::Uhd4k)
    } else if p.qhd.is_match(&text) {
        Some(ResolutionClass::Qhd2k)
    } else if p.fhd.is_match(&text) {
        Some(ResolutionClass::Fhd1080p)
    } else if p.hd.is_match(&text) {
        Some(ResolutionClass::Hd)
    } else if p.sd.is_match(&text) {
        Some(ResolutionClass::Sd)
    } else {
        None
    };

    let frame_rate = p.fps.captures(&text).and_then(|c| c[1].parse::<f64>().ok()).filter(|f| *f > 0.0);

    let codec = if p.h265.is_match(&text) {
        Some(Codec::H265)
    } else if p.h264.is_match(&text) {
        Some(Codec::H264)
    } else {
        None
    };

    let explicit_bitrate_mbps = p.bitrate.captures(&text).and_then(|c| {
        let value = c[1].parse::<f64>().ok()?;
        let mbps = if c[2].starts_with('k') { value / 1000.0 } else { value };
        (mbps > 0.0).then_some(mbps)
    });

    let assumed_default = resolution_class.is_none() && explicit_bitrate_mbps.is_none();
    let spec = StreamingSpec {
        raw_text: raw_text.to_string(),
        resolution_class: if assumed_default { Some(ResolutionClass::Hd) } else { resolution_class },
        frame_rate,
        codec,
        explicit_bitrate_mbps,
        assumed_default,
    };
    spec.validate()?;
    Ok(spec)
}

/// Key of the bitrate table.
pub type BitrateKey = (ResolutionClass, FpsBucket, Codec);

/// The minimum-bitrate lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct BitrateTable {
    entries: BTreeMap<BitrateKey, f64>,
}

impl BitrateTable {
    /// The table shipped with the crate.
    pub fn builtin() -> &'static BitrateTable {
        static TABLE: OnceLock<BitrateTable> = OnceLock::new();
        TABLE.get_or_init(|| BitrateTable::parse(BITRATE_TABLE).expect("shipped bitrate table is valid"))
    }

    /// Parses the `<class> <fps_bucket> <codec> = <mbps>` format.
    pub fn parse(text: &str) -> Result<Self, RequirementError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| RequirementError::BadTable { line: idx + 1, reason };
            let (key, value) = line.split_once('=').ok_or_else(|| bad("missing `=`".into()))?;
            let parts: Vec<&str> = key.split_whitespace().collect();
            let [class, bucket, codec] = parts[..] else {
                return Err(bad(format!("expected 3 key fields, found {}", parts.len())));
            };
            let class = ResolutionClass::from_str(class).map_err(|e| bad(e.to_string()))?;
            let bucket = match bucket {
                "30" => FpsBucket::Fps30,
                "60" => FpsBucket::Fps60,
                other => return Err(bad(format!("unknown fps bucket `{other}`"))),
            };
            let codec = Codec::from_str(codec).map_err(|e| bad(e.to_string()))?;
            let mbps: f64 = value.trim().parse().map_err(|_| bad(format!("bad rate `{}`", value.trim())))?;
            if !mbps.is_finite() || mbps <= 0.0 {
                return Err(bad(format!("rate must be positive, got {mbps}")));
            }
            if entries.insert((class, bucket, codec), mbps).is_some() {
                return Err(bad("duplicate key".into()));
            }
        }
        let table = BitrateTable { entries };
        for class in [
            ResolutionClass::Sd,
            ResolutionClass::Hd,
            ResolutionClass::Fhd1080p,
            ResolutionClass::Qhd2k,
            ResolutionClass::Uhd4k,
        ] {
            for bucket in [FpsBucket::Fps30, FpsBucket::Fps60] {
                for codec in [Codec::H264, Codec::H265, Codec::Unknown] {
                    if !table.entries.contains_key(&(class, bucket, codec)) {
                        return Err(RequirementError::BadTable {
                            line: 0,
                            reason: format!("missing entry {class} {bucket:?} {}", codec.as_str()),
                        });
                    }
                }
            }
        }
        Ok(table)
    }

    pub fn lookup(&self, key: BitrateKey) -> f64 {
        self.entries[&key]
    }
}

/// R1 in Mbps. An explicit bitrate wins over the resolution class.
pub fn derive_min_throughput(spec: &StreamingSpec) -> f64 {
    derive_min_throughput_with(spec, BitrateTable::builtin())
}

pub fn derive_min_throughput_with(spec: &StreamingSpec, table: &BitrateTable) -> f64 {
    if let Some(rate) = spec.explicit_bitrate_mbps {
        return rate;
    }
    let class = spec.resolution_class.unwrap_or(ResolutionClass::Hd);
    table.lookup((class, FpsBucket::of(spec.frame_rate), spec.codec.unwrap_or(Codec::Unknown)))
}

/// R2 in Mbps.
pub fn derive_max_throughput(net: &HomeNetwork) -> f64 {
    net.upload_speed_mbps * net.share_fraction
}

pub fn build_requirements(spec: &StreamingSpec, net: &HomeNetwork) -> Result<RequirementSet, RequirementError> {
    spec.validate()?;
    net.validate()?;
    let min = derive_min_throughput(spec);
    let max = derive_max_throughput(net);
    if min > max {
        return Err(RequirementError::InfeasibleRequirements { min_mbps: min, max_mbps: max });
    }
    let reqs = RequirementSet::new(min, max, DEFAULT_LOSS_THRESHOLD)?;
    reqs.validate_for(net)?;
    Ok(reqs)
}

const MODELING_INSTRUCTION: &str = "\
You convert a live-streaming user's description into structured fields.
Reply with exactly these four lines and nothing else:
resolution: one of SD, HD, FHD_1080p, QHD_2K, UHD_4K, or none
fps: a number, or none
codec: one of H264, H265, or none
bitrate_mbps: a number if the user states a bitrate, otherwise none";

/// Builds the modeling request for the LLM-assisted parser.
pub fn modeling_request(model_id: &str, temperature: f64, raw_text: &str) -> ChatRequest {
    ChatRequest {
        model: model_id.to_string(),
        temperature,
        messages: vec![ChatMessage::system(MODELING_INSTRUCTION), ChatMessage::user(raw_text)],
    }
}

/// Parses the four-line reply of the modeling LLM.
pub fn parse_modeling_reply(raw_text: &str, reply: &str) -> Result<StreamingSpec, RequirementError> {
    let mut fields: BTreeMap<String, String> = BTreeMap::new();
    for line in reply.lines() {
        if let Some((k, v)) = line.split_once(':') {
            fields.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
    }
    let field = |name: &str| -> Result<Option<String>, RequirementError> {
        let v = fields
            .get(name)
            .ok_or_else(|| RequirementError::InvalidSpec(format!("modeling reply lacks `{name}`")))?;
        Ok((!v.eq_ignore_ascii_case("none") && !v.is_empty()).then(|| v.clone()))
    };
    let number = |name: &str| -> Result<Option<f64>, RequirementError> {
        field(name)?
            .map(|v| v.parse::<f64>().map_err(|_| RequirementError::InvalidSpec(format!("bad `{name}` value `{v}`"))))
            .transpose()
    };
    let resolution_class = field("resolution")?.map(|v| ResolutionClass::from_str(&v)).transpose()?;
    let codec = field("codec")?.map(|v| Codec::from_str(&v)).transpose()?;
    let frame_rate = number("fps")?;
    let explicit_bitrate_mbps = number("bitrate_mbps")?;
    let assumed_default = resolution_class.is_none() && explicit_bitrate_mbps.is_none();
    let spec = StreamingSpec {
        raw_text: raw_text.to_string(),
        resolution_class: if assumed_default { Some(ResolutionClass::Hd) } else { resolution_class },
        frame_rate,
        codec,
        explicit_bitrate_mbps,
        assumed_default,
    };
    spec.validate()?;
    Ok(spec)
}

/// LLM-assisted variant of [`parse_streaming_spec`].
pub fn parse_streaming_spec_with_llm(
    client: &dyn ChatClient,
    model_id: &str,
    temperature: f64,
    raw_text: &str,
) -> Result<StreamingSpec, RequirementError> {
    if raw_text.trim().is_empty() {
        return Err(RequirementError::InvalidSpec("empty streaming requirement".into()));
    }
    let response = client
        .complete(&modeling_request(model_id, temperature, raw_text))
        .map_err(|e| RequirementError::InvalidSpec(format!("modeling backend failed: {e}")))?;
    parse_modeling_reply(raw_text, &response.text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_table_rows() {
        let hd = parse_streaming_spec("HD streaming").unwrap();
        assert_eq!(hd.resolution_class, Some(ResolutionClass::Hd));
        assert_eq!((hd.frame_rate, hd.codec, hd.explicit_bitrate_mbps), (None, None, None));
        assert!(!hd.assumed_default);

        let uhd = parse_streaming_spec("4K resolution 60Hz at 30Mbps bitrate").unwrap();
        assert_eq!(uhd.resolution_class, Some(ResolutionClass::Uhd4k));
        assert_eq!(uhd.frame_rate, Some(60.0));
        assert_eq!(uhd.codec, None);
        assert_eq!(uhd.explicit_bitrate_mbps, Some(30.0));

        let fhd = parse_streaming_spec("1080p resolution streaming using h.265").unwrap();
        assert_eq!(fhd.resolution_class, Some(ResolutionClass::Fhd1080p));
        assert_eq!(fhd.codec, Some(Codec::H265));

        let qhd = parse_streaming_spec("2K resolution 60fps streaming").unwrap();
        assert_eq!(qhd.resolution_class, Some(ResolutionClass::Qhd2k));
        assert_eq!(qhd.frame_rate, Some(60.0));
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(parse_streaming_spec(""), Err(RequirementError::InvalidSpec(_))));
        assert!(matches!(parse_streaming_spec("   "), Err(RequirementError::InvalidSpec(_))));
    }

    #[test]
    fn unrecognized_text_defaults_to_hd() {
        let spec = parse_streaming_spec("I want to stream my cooking show").unwrap();
        assert_eq!(spec.resolution_class, Some(ResolutionClass::Hd));
        assert!(spec.assumed_default);
    }

    #[test]
    fn full_hd_is_not_mistaken_for_hd() {
        let spec = parse_streaming_spec("Full HD gaming at 30 fps with x264").unwrap();
        assert_eq!(spec.resolution_class, Some(ResolutionClass::Fhd1080p));
        assert_eq!(spec.codec, Some(Codec::H264));
        assert_eq!(spec.frame_rate, Some(30.0));
    }

    #[test]
    fn kbps_bitrates_are_converted() {
        let spec = parse_streaming_spec("stream at 4500 kbps").unwrap();
        assert_eq!(spec.explicit_bitrate_mbps, Some(4.5));
        assert_eq!(spec.resolution_class, None);
        assert_eq!(derive_min_throughput(&spec), 4.5);
    }

    #[test]
    fn min_throughput_matches_reference_rows() {
        let cases = [
            ("HD streaming", 5.0),
            ("1080p resolution streaming using h.265", 8.0),
            ("2K resolution 60fps streaming", 16.0),
            ("4K resolution 60Hz at 30Mbps bitrate", 30.0),
        ];
        for (text, expected) in cases {
            assert_eq!(derive_min_throughput(&parse_streaming_spec(text).unwrap()), expected, "{text}");
        }
    }

    #[test]
    fn max_throughput_is_share_of_uplink() {
        assert_eq!(derive_max_throughput(&HomeNetwork::new(30.0).unwrap()), 15.0);
        assert_eq!(derive_max_throughput(&HomeNetwork::new(100.0).unwrap()), 50.0);
        assert_eq!(derive_max_throughput(&HomeNetwork::new(60.0).unwrap()), 30.0);
        assert_eq!(derive_max_throughput(&HomeNetwork::with_share(60.0, 0.25).unwrap()), 15.0);
    }

    #[test]
    fn build_requirements_examples() {
        let qhd = parse_streaming_spec("2K resolution 60fps streaming").unwrap();
        let reqs = build_requirements(&qhd, &HomeNetwork::new(80.0).unwrap()).unwrap();
        assert_eq!((reqs.r1_min_throughput_mbps, reqs.r2_max_throughput_mbps, reqs.r3_loss_threshold), (16.0, 40.0, 0.05));

        let hd = parse_streaming_spec("HD streaming").unwrap();
        let reqs = build_requirements(&hd, &HomeNetwork::new(30.0).unwrap()).unwrap();
        assert_eq!((reqs.r1_min_throughput_mbps, reqs.r2_max_throughput_mbps), (5.0, 15.0));

        let uhd = parse_streaming_spec("4K resolution 60Hz at 30Mbps bitrate").unwrap();
        let err = build_requirements(&uhd, &HomeNetwork::new(50.0).unwrap()).unwrap_err();
        assert_eq!(err, RequirementError::InfeasibleRequirements { min_mbps: 30.0, max_mbps: 25.0 });
        let msg = err.to_string();
        assert!(msg.contains("30") && msg.contains("25"), "{msg}");
    }

    #[test]
    fn invalid_networks_are_rejected() {
        assert!(HomeNetwork::new(0.0).is_err());
        assert!(HomeNetwork::new(-5.0).is_err());
        assert!(HomeNetwork::with_share(50.0, 0.0).is_err());
        assert!(HomeNetwork::with_share(50.0, 1.5).is_err());
        assert!(HomeNetwork::with_share(50.0, 1.0).is_ok());
    }

    #[test]
    fn requirement_set_invariants() {
        assert!(RequirementSet::new(16.0, 30.0, 0.05).is_ok());
        assert!(matches!(
            RequirementSet::new(31.0, 30.0, 0.05),
            Err(RequirementError::InfeasibleRequirements { .. })
        ));
        assert!(RequirementSet::new(0.0, 30.0, 0.05).is_err());
        assert!(RequirementSet::new(10.0, 30.0, 1.0).is_err());
        let reqs = RequirementSet::new(10.0, 30.0, 0.05).unwrap();
        assert!(reqs.validate_for(&HomeNetwork::new(20.0).unwrap()).is_err());
    }

    #[test]
    fn table_rejects_missing_and_duplicate_entries() {
        assert!(BitrateTable::parse("HD 30 H264 = 5\n").is_err());
        let dup = format!("{BITRATE_TABLE}\nHD 30 H264 = 6\n");
        assert!(matches!(BitrateTable::parse(&dup), Err(RequirementError::BadTable { .. })));
        assert!(BitrateTable::parse("HD 45 H264 = 5").is_err());
    }

    #[test]
    fn modeling_reply_parses() {
        let reply = "resolution: QHD_2K\nfps: 60\ncodec: none\nbitrate_mbps: none\n";
        let spec = parse_modeling_reply("2K resolution 60fps streaming", reply).unwrap();
        assert_eq!(spec.resolution_class, Some(ResolutionClass::Qhd2k));
        assert_eq!(derive_min_throughput(&spec), 16.0);
        assert!(parse_modeling_reply("x", "resolution: HD\n").is_err());
    }
}
