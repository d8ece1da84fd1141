use serde::{Deserialize, Serialize};

use crate::domain::{ForgeryType, Label, ScoreMap};
use crate::error::{Error, Result};

/// Response text for an image judged authentic.
pub const AUTHENTIC_RESPONSE: &str = "No, there is no forgery information in this image.";

/// Score at or above which a pixel counts as part of the described region.
pub const REGION_LEVEL: f32 = 0.5;

/// Detection outcome; class index 0 is authentic, 1 is forged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Authentic,
    Forged,
}

impl Verdict {
    pub fn index(self) -> usize {
        self.label().index()
    }

    pub fn from_index(i: usize) -> Self {
        Verdict::from(Label::from_index(i))
    }

    pub fn label(self) -> Label {
        match self {
            Verdict::Authentic => Label::Authentic,
            Verdict::Forged => Label::Forged,
        }
    }
}

impl From<Label> for Verdict {
    fn from(l: Label) -> Self {
        match l {
            Label::Authentic => Verdict::Authentic,
            Label::Forged => Verdict::Forged,
        }
    }
}

fn rationale(t: ForgeryType) -> &'static str {
    match t {
        ForgeryType::Splicing => {
            "Its texture and colour statistics do not match the surrounding content, \
             which suggests it was pasted in from another image."
        }
        ForgeryType::CopyMove => {
            "Its content repeats another part of the same image, \
             which suggests it was copied and moved."
        }
        ForgeryType::Removal => {
            "It is unusually smooth compared with its surroundings, \
             which suggests an object was erased and the gap filled in."
        }
        ForgeryType::None => "Its statistics are inconsistent with the rest of the image.",
    }
}

/// Deterministic slot-filled explanation. A forged verdict needs at least
/// one pixel at or above [`REGION_LEVEL`].
pub fn render_explanation(
    verdict: Verdict,
    forgery_type: ForgeryType,
    mask: &ScoreMap,
) -> Result<String> {
    if verdict == Verdict::Authentic {
        return Ok(AUTHENTIC_RESPONSE.to_string());
    }
    let bb = mask.bounding_box(REGION_LEVEL).ok_or_else(|| {
        Error::Contract("forged verdict but no pixel reaches the region level".into())
    })?;
    let region = mask.threshold(REGION_LEVEL);
    let percent = (region.area_fraction() * 100.0).round() as u32;
    let kind = match forgery_type {
        ForgeryType::None => "unspecified".to_string(),
        t => t.to_string(),
    };
    Ok(format!(
        "Yes, this image has been tampered with. The forgery type is {kind}. \
         The manipulated region spans x {}-{} and y {}-{} and covers {percent}% of the image. {}",
        bb.x0,
        bb.x1,
        bb.y0,
        bb.y1,
        rationale(forgery_type)
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn authentic_text_is_fixed() {
        let m = ScoreMap::uniform(16, 16, 0.0).unwrap();
        assert_eq!(
            render_explanation(Verdict::Authentic, ForgeryType::None, &m).unwrap(),
            "No, there is no forgery information in this image."
        );
    }

    #[test]
    fn full_image_splice() {
        let m = ScoreMap::uniform(32, 16, 1.0).unwrap();
        let t = render_explanation(Verdict::Forged, ForgeryType::Splicing, &m).unwrap();
        assert!(t.contains("100%"), "{t}");
        assert!(t.contains("x 0-31 and y 0-15"), "{t}");
        assert!(t.contains("splicing"));
        assert_eq!(
            t,
            render_explanation(Verdict::Forged, ForgeryType::Splicing, &m).unwrap()
        );
    }

    #[test]
    fn forged_without_region_is_contract_error() {
        let m = ScoreMap::uniform(16, 16, 0.49).unwrap();
        assert!(matches!(
            render_explanation(Verdict::Forged, ForgeryType::Removal, &m),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn verdict_index_order() {
        assert_eq!(Verdict::from_index(0), Verdict::Authentic);
        assert_eq!(Verdict::from_index(1), Verdict::Forged);
        assert_eq!(Verdict::Forged.index(), 1);
    }
}
