//! Five-finger hand registration: contour ordering, thumb identification
//! and handedness.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Little,
}

impl Finger {
    pub const ORDER: [Finger; 5] = [Finger::Thumb, Finger::Index, Finger::Middle, Finger::Ring, Finger::Little];

    /// One-letter code used on the wire.
    pub fn code(self) -> char {
        match self {
            Finger::Thumb => 't',
            Finger::Index => 'i',
            Finger::Middle => 'm',
            Finger::Ring => 'r',
            Finger::Little => 'l',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Handedness {
    Left,
    Right,
}

impl Handedness {
    pub fn name(self) -> &'static str {
        match self {
            Handedness::Left => "left",
            Handedness::Right => "right",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Handedness::Left => Handedness::Right,
            Handedness::Right => Handedness::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegistrationError {
    #[error("registration needs exactly five fingertips, got {0}")]
    WrongCount(usize),
    #[error("two fingertips share a position")]
    DuplicatePositions,
    #[error("shortest-edge contour is not a path")]
    NonPathContour,
    #[error("both contour ends are equally far from the centroid")]
    AmbiguousThumb,
    #[error("fingertips are collinear")]
    AmbiguousHandedness,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HandRegistration {
    pub handedness: Handedness,
    /// Finger of each input position.
    pub fingers: [Finger; 5],
    /// Input indices from thumb to little finger.
    pub contour: [usize; 5],
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Joins the closest pairs of not-yet-connected fingertips until four edges
/// connect all five, and returns the resulting path as input indices.
/// Its orientation (which end comes first) is not meaningful.
pub fn order_contour(positions: &[[f64; 2]; 5]) -> Result<[usize; 5], RegistrationError> {
    let mut pairs = Vec::with_capacity(10);
    for i in 0..5 {
        for j in i + 1..5 {
            let d = dist(positions[i], positions[j]);
            if d == 0.0 {
                return Err(RegistrationError::DuplicatePositions);
            }
            pairs.push((d, i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut label = [0usize, 1, 2, 3, 4];
    let mut adjacency = [[usize::MAX; 2]; 5];
    let mut degree = [0usize; 5];
    let mut edges = 0;
    for (_, i, j) in pairs {
        let (li, lj) = (label[i], label[j]);
        if li == lj {
            continue;
        }
        for l in label.iter_mut() {
            if *l == lj {
                *l = li;
            }
        }
        for (a, b) in [(i, j), (j, i)] {
            if degree[a] == 2 {
                return Err(RegistrationError::NonPathContour);
            }
            adjacency[a][degree[a]] = b;
            degree[a] += 1;
        }
        edges += 1;
        if edges == 4 {
            break;
        }
    }
    let start = (0..5).find(|&i| degree[i] == 1).expect("a path has two ends");
    let mut path = [start; 5];
    let mut prev = usize::MAX;
    for k in 1..5 {
        let cur = path[k - 1];
        let next = adjacency[cur].into_iter().find(|&n| n != prev && n != usize::MAX).expect("path continues");
        path[k] = next;
        prev = cur;
    }
    Ok(path)
}

/// Orients `path` so the thumb comes first: of the two ends, the thumb is the
/// one farther from the centroid of all five positions.
pub fn identify_thumb(path: [usize; 5], positions: &[[f64; 2]; 5]) -> Result<[usize; 5], RegistrationError> {
    let c = [
        positions.iter().map(|p| p[0]).sum::<f64>() / 5.0,
        positions.iter().map(|p| p[1]).sum::<f64>() / 5.0,
    ];
    let d_first = dist(positions[path[0]], c);
    let d_last = dist(positions[path[4]], c);
    if (d_first - d_last).abs() <= 1e-9 * d_first.max(d_last) {
        return Err(RegistrationError::AmbiguousThumb);
    }
    let mut out = path;
    if d_last > d_first {
        out.reverse();
    }
    Ok(out)
}

/// Sign of `(little - thumb) x sum(index, middle, ring - thumb)` in image
/// coordinates (y down): positive is a right hand as imaged from below the
/// surface, negative a left hand.
pub fn classify_handedness(contour: [usize; 5], positions: &[[f64; 2]; 5]) -> Result<Handedness, RegistrationError> {
    let t = positions[contour[0]];
    let l = positions[contour[4]];
    let v1 = [l[0] - t[0], l[1] - t[1]];
    let mut v2 = [0.0; 2];
    for &k in &contour[1..4] {
        v2[0] += positions[k][0] - t[0];
        v2[1] += positions[k][1] - t[1];
    }
    let z = v1[0] * v2[1] - v1[1] * v2[0];
    let scale = v1[0].hypot(v1[1]) * v2[0].hypot(v2[1]);
    if z.abs() <= 1e-9 * scale {
        Err(RegistrationError::AmbiguousHandedness)
    } else if z > 0.0 {
        Ok(Handedness::Right)
    } else {
        Ok(Handedness::Left)
    }
}

/// Full registration of five fingertip positions.
pub fn register(positions: &[[f64; 2]]) -> Result<HandRegistration, RegistrationError> {
    let positions: &[[f64; 2]; 5] = positions
        .try_into()
        .map_err(|_| RegistrationError::WrongCount(positions.len()))?;
    let path = order_contour(positions)?;
    let contour = identify_thumb(path, positions)?;
    let handedness = classify_handedness(contour, positions)?;
    let mut fingers = [Finger::Thumb; 5];
    for (finger, &k) in Finger::ORDER.iter().zip(&contour) {
        fingers[k] = *finger;
    }
    Ok(HandRegistration {
        handedness,
        fingers,
        contour,
    })
}
