//! JSON Lines manifest: one header line, then one record per line.
//!
//! ```text
//! {"format":"cattleact-manifest","version":1}
//! {"kind":"action","id":"a00000","split":"train","image":"images/a00000.png","box":[x0,y0,x1,y1],"skeleton":[["head",x,y,conf],...],"label":"grazing"}
//! {"kind":"interaction","id":"i00000",...,"label":"mount","member_a":{"box":[...],"skeleton":[...],"label":"riding"},"member_b":{...}}
//! ```
//!
//! Action records point at the crop itself; `box` places the crop in its
//! source frame. Interaction records point at the union crop; member boxes and
//! skeletons are in union-crop coordinates.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{
    ActionClass, ActionSample, BoundingBox, InteractionClass, InteractionSample, Keypoint,
    KeypointId, Member, Skeleton, Split, NUM_CLASSES,
};
use crate::error::{Error, Result};
use crate::image::Image;

pub const MANIFEST_FORMAT: &str = "cattleact-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionRecord {
    pub id: String,
    pub split: Split,
    pub image: String,
    pub bbox: BoundingBox,
    pub skeleton: Skeleton,
    pub label: ActionClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub skeleton: Skeleton,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<ActionClass>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub id: String,
    pub split: Split,
    pub image: String,
    /// Union crop location in the source frame.
    pub bbox: BoundingBox,
    pub label: InteractionClass,
    pub member_a: MemberRecord,
    pub member_b: MemberRecord,
    pub cue_region: Option<BoundingBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Action(ActionRecord),
    Interaction(InteractionRecord),
}

impl Record {
    pub fn id(&self) -> &str {
        match self {
            Record::Action(r) => &r.id,
            Record::Interaction(r) => &r.id,
        }
    }

    pub fn image(&self) -> &str {
        match self {
            Record::Action(r) => &r.image,
            Record::Interaction(r) => &r.image,
        }
    }

    pub fn split(&self) -> Split {
        match self {
            Record::Action(r) => r.split,
            Record::Interaction(r) => r.split,
        }
    }
}

/// Per-class record counts (`n_j`) for both label sets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub action: [usize; NUM_CLASSES],
    pub interaction: [usize; NUM_CLASSES],
}

impl ClassCounts {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a Record>) -> Self {
        let mut counts = Self::default();
        for r in records {
            match r {
                Record::Action(a) => counts.action[a.label.index()] += 1,
                Record::Interaction(i) => counts.interaction[i.label.index()] += 1,
            }
        }
        counts
    }

    pub fn action_count(&self, class: ActionClass) -> usize {
        self.action[class.index()]
    }

    pub fn interaction_count(&self, class: InteractionClass) -> usize {
        self.interaction[class.index()]
    }

    /// Counts keyed by class name, both label sets merged.
    pub fn by_name(&self) -> BTreeMap<&'static str, usize> {
        let mut map = BTreeMap::new();
        for c in ActionClass::ALL {
            map.insert(c.as_str(), self.action[c.index()]);
        }
        for c in InteractionClass::ALL {
            map.insert(c.as_str(), self.interaction[c.index()]);
        }
        map
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    /// Directory that image paths are relative to.
    pub root: PathBuf,
    pub records: Vec<Record>,
    pub class_counts: ClassCounts,
}

#[derive(Serialize)]
struct Header<'a> {
    format: &'a str,
    version: u32,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    kind: &'static str,
    id: &'a str,
    split: Split,
    image: &'a str,
    #[serde(rename = "box")]
    bbox: BoundingBox,
    skeleton: &'a Skeleton,
    label: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    member_a: Option<&'a MemberRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    member_b: Option<&'a MemberRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cue_region: Option<BoundingBox>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, records: Vec<Record>) -> Self {
        let class_counts = ClassCounts::from_records(&records);
        Self {
            root: root.into(),
            records,
            class_counts,
        }
    }

    pub fn actions(&self) -> impl Iterator<Item = &ActionRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Action(a) => Some(a),
            _ => None,
        })
    }

    pub fn interactions(&self) -> impl Iterator<Item = &InteractionRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Interaction(i) => Some(i),
            _ => None,
        })
    }

    pub fn counts_for(&self, split: Split) -> ClassCounts {
        ClassCounts::from_records(self.records.iter().filter(|r| r.split() == split))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Header {
            format: MANIFEST_FORMAT,
            version: MANIFEST_VERSION,
        })
        .expect("header serializes");
        out.push('\n');
        for r in &self.records {
            let rec = match r {
                Record::Action(a) => RecordOut {
                    kind: "action",
                    id: &a.id,
                    split: a.split,
                    image: &a.image,
                    bbox: a.bbox,
                    skeleton: &a.skeleton,
                    label: a.label.as_str(),
                    member_a: None,
                    member_b: None,
                    cue_region: None,
                },
                Record::Interaction(i) => RecordOut {
                    kind: "interaction",
                    id: &i.id,
                    split: i.split,
                    image: &i.image,
                    bbox: i.bbox,
                    skeleton: &EMPTY_SKELETON,
                    label: i.label.as_str(),
                    member_a: Some(&i.member_a),
                    member_b: Some(&i.member_b),
                    cue_region: i.cue_region,
                },
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    /// Parses manifest text without checking that image files exist.
    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| violation(0, "format", "missing header line"))?;
        let header: Value = serde_json::from_str(header)
            .map_err(|e| violation(0, "format", &format!("header is not JSON: {e}")))?;
        if header.get("format").and_then(Value::as_str) != Some(MANIFEST_FORMAT) {
            return Err(violation(0, "format", &format!("expected \"{MANIFEST_FORMAT}\"")));
        }
        if header.get("version").and_then(Value::as_u64) != Some(MANIFEST_VERSION as u64) {
            return Err(violation(0, "version", &format!("expected {MANIFEST_VERSION}")));
        }

        let mut records = Vec::new();
        let mut ids = HashSet::new();
        for (index, line) in lines.enumerate() {
            let value: Value = serde_json::from_str(line)
                .map_err(|e| violation(index, "<record>", &format!("not valid JSON: {e}")))?;
            let obj = value
                .as_object()
                .ok_or_else(|| violation(index, "<record>", "not a JSON object"))?;
            let record = parse_record(index, obj)?;
            if !ids.insert(record.id().to_string()) {
                return Err(violation(index, "id", &format!("duplicate id `{}`", record.id())));
            }
            records.push(record);
        }
        Ok(Self::new(root, records))
    }
}

static EMPTY_SKELETON: Skeleton = Skeleton {
    keypoints: Vec::new(),
};

fn violation(index: usize, field: &str, message: &str) -> Error {
    Error::SchemaViolation {
        index,
        field: field.to_string(),
        message: message.to_string(),
    }
}

fn field<'a>(index: usize, obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value> {
    obj.get(name).ok_or_else(|| violation(index, name, "missing"))
}

fn str_field<'a>(index: usize, obj: &'a Map<String, Value>, name: &str) -> Result<&'a str> {
    field(index, obj, name)?
        .as_str()
        .ok_or_else(|| violation(index, name, "expected a string"))
}

fn box_value(index: usize, name: &str, v: &Value) -> Result<BoundingBox> {
    let arr: [f64; 4] = serde_json::from_value(v.clone())
        .map_err(|_| violation(index, name, "expected [x0, y0, x1, y1]"))?;
    BoundingBox::try_from(arr).map_err(|e| violation(index, name, &e.to_string()))
}

fn skeleton_value(index: usize, name: &str, v: &Value) -> Result<Skeleton> {
    let raw: Vec<(String, f64, f64, f64)> = serde_json::from_value(v.clone())
        .map_err(|_| violation(index, name, "expected [[name, x, y, conf], ...]"))?;
    let mut keypoints = Vec::with_capacity(raw.len());
    for (kp_name, x, y, confidence) in raw {
        let id: KeypointId = kp_name
            .parse()
            .map_err(|_| violation(index, name, &format!("unknown keypoint `{kp_name}`")))?;
        keypoints.push(Keypoint {
            id,
            x,
            y,
            confidence,
        });
    }
    Skeleton::new(keypoints).map_err(|e| violation(index, name, &e.to_string()))
}

fn split_value(index: usize, obj: &Map<String, Value>) -> Result<Split> {
    match obj.get("split") {
        None => Ok(Split::Train),
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|_| violation(index, "split", "expected train | val | test")),
    }
}

fn member_value(index: usize, name: &str, v: &Value, extent: (f64, f64)) -> Result<MemberRecord> {
    let obj = v
        .as_object()
        .ok_or_else(|| violation(index, name, "expected an object"))?;
    let bbox = box_value(index, &format!("{name}.box"), field(index, obj, "box").map_err(|_| violation(index, &format!("{name}.box"), "missing"))?)?;
    let frame = BoundingBox {
        x_min: 0.0,
        y_min: 0.0,
        x_max: extent.0,
        y_max: extent.1,
    };
    if !frame.contains_box(&bbox) {
        return Err(violation(index, &format!("{name}.box"), "member box outside union crop"));
    }
    let skeleton = match obj.get("skeleton") {
        Some(s) => skeleton_value(index, &format!("{name}.skeleton"), s)?,
        None => Skeleton::default(),
    };
    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(l) => Some(
            l.as_str()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| violation(index, &format!("{name}.label"), "unknown action label"))?,
        ),
    };
    Ok(MemberRecord {
        bbox,
        skeleton,
        label,
    })
}

fn parse_record(index: usize, obj: &Map<String, Value>) -> Result<Record> {
    let kind = str_field(index, obj, "kind")?;
    let id = str_field(index, obj, "id")?.to_string();
    if id.is_empty() {
        return Err(violation(index, "id", "empty"));
    }
    let image = str_field(index, obj, "image")?.to_string();
    let bbox = box_value(index, "box", field(index, obj, "box")?)?;
    let skeleton = skeleton_value(index, "skeleton", field(index, obj, "skeleton")?)?;
    let label = str_field(index, obj, "label")?;
    let split = split_value(index, obj)?;
    match kind {
        "action" => Ok(Record::Action(ActionRecord {
            id,
            split,
            image,
            bbox,
            skeleton,
            label: label
                .parse()
                .map_err(|_| violation(index, "label", &format!("unknown action label `{label}`")))?,
        })),
        "interaction" => {
            let extent = (bbox.width(), bbox.height());
            let cue_region = match obj.get("cue_region") {
                None | Some(Value::Null) => None,
                Some(v) => Some(box_value(index, "cue_region", v)?),
            };
            Ok(Record::Interaction(InteractionRecord {
                id,
                split,
                image,
                bbox,
                label: label.parse().map_err(|_| {
                    violation(index, "label", &format!("unknown interaction label `{label}`"))
                })?,
                member_a: member_value(index, "member_a", field(index, obj, "member_a")?, extent)?,
                member_b: member_value(index, "member_b", field(index, obj, "member_b")?, extent)?,
                cue_region,
            }))
        }
        other => Err(violation(index, "kind", &format!("expected action | interaction, got `{other}`"))),
    }
}

/// Loads and validates a manifest; every referenced image must exist.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = DatasetManifest::parse(&text, root)?;
    for (index, r) in manifest.records.iter().enumerate() {
        if !manifest.root.join(r.image()).is_file() {
            return Err(violation(
                index,
                "image",
                &format!("unresolvable path `{}`", r.image()),
            ));
        }
    }
    Ok(manifest)
}

/// A manifest together with its decoded images.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    images: HashMap<String, Image>,
}

impl Dataset {
    pub fn from_parts(manifest: DatasetManifest, images: HashMap<String, Image>) -> Result<Self> {
        for r in &manifest.records {
            if !images.contains_key(r.image()) {
                return Err(Error::MissingFile(PathBuf::from(r.image())));
            }
        }
        Ok(Self { manifest, images })
    }

    /// Reads every referenced PNG from disk.
    pub fn load(manifest: DatasetManifest) -> Result<Self> {
        let mut images = HashMap::new();
        for r in &manifest.records {
            if !images.contains_key(r.image()) {
                let img = Image::load_png(&manifest.root.join(r.image()))?;
                images.insert(r.image().to_string(), img);
            }
        }
        Ok(Self { manifest, images })
    }

    pub fn image(&self, path: &str) -> Option<&Image> {
        self.images.get(path)
    }

    pub fn images(&self) -> &HashMap<String, Image> {
        &self.images
    }

    pub fn action_sample(&self, r: &ActionRecord) -> ActionSample {
        ActionSample {
            id: r.id.clone(),
            image: self.images[&r.image].clone(),
            bbox: r.bbox,
            skeleton: r.skeleton.clone(),
            label: Some(r.label),
        }
    }

    pub fn interaction_sample(&self, r: &InteractionRecord) -> InteractionSample {
        let member = |m: &MemberRecord| Member {
            bbox: m.bbox,
            skeleton: m.skeleton.clone(),
            label: m.label,
        };
        InteractionSample {
            id: r.id.clone(),
            union_image: self.images[&r.image].clone(),
            member_a: member(&r.member_a),
            member_b: member(&r.member_b),
            label: r.label,
            cue_region: r.cue_region,
        }
    }

    pub fn action_samples(&self, split: Split) -> Vec<ActionSample> {
        self.manifest
            .actions()
            .filter(|r| r.split == split)
            .map(|r| self.action_sample(r))
            .collect()
    }

    pub fn interaction_samples(&self, split: Split) -> Vec<InteractionSample> {
        self.manifest
            .interactions()
            .filter(|r| r.split == split)
            .map(|r| self.interaction_sample(r))
            .collect()
    }

    /// Per-channel mean over all training images, used as the cutout and
    /// occlusion fill value.
    pub fn channel_mean(&self, split: Split) -> [f32; 3] {
        let mut sum = [0.0f64; 3];
        let mut n = 0usize;
        for r in self.manifest.records.iter().filter(|r| r.split() == split) {
            let img = &self.images[r.image()];
            let m = img.channel_mean();
            let px = img.height() * img.width();
            for ch in 0..3 {
                sum[ch] += m[ch] * px as f64;
            }
            n += px;
        }
        if n == 0 {
            return [0.5; 3];
        }
        sum.map(|s| (s / n as f64) as f32)
    }
}
