//! Segmented level-1 feature vector: organizer | mpeg7 | gist.

use crate::error::{Error, Result};

/// Organizer features after pruning the all-zero half of the released 816.
pub const ORGANIZER_DIM: usize = 408;
/// Four concatenated MPEG-7 descriptors: 192 + 256 + 80 + 256.
pub const MPEG7_DIM: usize = 784;
pub const GIST_DIM: usize = 512;

/// One named contiguous span of a feature vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Dense feature vector with an ordered, non-overlapping segment layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Vec<Segment>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The slice of a named segment, if the layout has it.
    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.values[s.offset..s.offset + s.len])
    }
}

/// Concatenates the level-1 image segments in fixed order. With organizer
/// features the total is 408 + 784 + 512 = 1704; without, 1296 and the
/// layout omits that segment.
pub fn combine_image_features(
    organizer: Option<&[f64]>,
    mpeg7: &[f64],
    gist: &[f64],
) -> Result<FeatureVector> {
    if let Some(org) = organizer {
        if org.len() != ORGANIZER_DIM {
            return Err(Error::Dimension(format!(
                "organizer segment has {} values, expected {ORGANIZER_DIM}",
                org.len()
            )));
        }
    }
    if mpeg7.len() != MPEG7_DIM {
        return Err(Error::Dimension(format!(
            "mpeg7 segment has {} values, expected {MPEG7_DIM}",
            mpeg7.len()
        )));
    }
    if gist.len() != GIST_DIM {
        return Err(Error::Dimension(format!(
            "gist segment has {} values, expected {GIST_DIM}",
            gist.len()
        )));
    }
    let mut values = Vec::new();
    let mut layout = Vec::new();
    if let Some(org) = organizer {
        layout.push(Segment {
            name: "organizer".into(),
            offset: 0,
            len: ORGANIZER_DIM,
        });
        values.extend_from_slice(org);
    }
    layout.push(Segment {
        name: "mpeg7".into(),
        offset: values.len(),
        len: MPEG7_DIM,
    });
    values.extend_from_slice(mpeg7);
    layout.push(Segment {
        name: "gist".into(),
        offset: values.len(),
        len: GIST_DIM,
    });
    values.extend_from_slice(gist);
    Ok(FeatureVector { values, layout })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_layout_is_1704() {
        let fv = combine_image_features(
            Some(&vec![1.0; ORGANIZER_DIM]),
            &vec![2.0; MPEG7_DIM],
            &vec![3.0; GIST_DIM],
        )
        .unwrap();
        assert_eq!(fv.len(), 1704);
        let names: Vec<&str> = fv.layout.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["organizer", "mpeg7", "gist"]);
        assert_eq!(fv.layout[0].offset, 0);
        assert_eq!(fv.layout[1].offset, 408);
        assert_eq!(fv.layout[2].offset, 1192);
    }

    #[test]
    fn absent_organizer_is_1296() {
        let fv =
            combine_image_features(None, &vec![2.0; MPEG7_DIM], &vec![3.0; GIST_DIM]).unwrap();
        assert_eq!(fv.len(), 1296);
        let names: Vec<&str> = fv.layout.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["mpeg7", "gist"]);
    }

    #[test]
    fn segments_round_trip_exactly() {
        let org: Vec<f64> = (0..ORGANIZER_DIM).map(|i| i as f64 * 0.5).collect();
        let mp: Vec<f64> = (0..MPEG7_DIM).map(|i| -(i as f64)).collect();
        let gi: Vec<f64> = (0..GIST_DIM).map(|i| 1.0 / (i + 1) as f64).collect();
        let fv = combine_image_features(Some(&org), &mp, &gi).unwrap();
        assert_eq!(fv.segment("organizer").unwrap(), &org[..]);
        assert_eq!(fv.segment("mpeg7").unwrap(), &mp[..]);
        assert_eq!(fv.segment("gist").unwrap(), &gi[..]);
        assert!(fv.segment("bow").is_none());
    }

    #[test]
    fn wrong_segment_lengths_fail() {
        assert!(matches!(
            combine_image_features(None, &vec![0.0; 100], &vec![0.0; GIST_DIM]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            combine_image_features(Some(&[0.0; 3]), &vec![0.0; MPEG7_DIM], &vec![0.0; GIST_DIM]),
            Err(Error::Dimension(_))
        ));
    }
}
