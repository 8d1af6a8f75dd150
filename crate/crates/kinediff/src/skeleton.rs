//! Kinematic tree: parents, depth-based hierarchy levels, graph-distance
//! adjacency banks, and forward-kinematic pose assembly.

use crate::disentangle::BoneDecomp;
use crate::error::{Error, Result};
use crate::pose::{FrameRef, PoseSeq3D};

/// Number of hierarchy levels; joint depth is clamped to `LEVELS - 1`.
pub const HIERARCHY_LEVELS: usize = 6;

#[derive(Debug, Clone)]
pub struct Skeleton {
    pub joints: usize,
    /// parent[j]; the single root holds -1.
    pub parent: Vec<i32>,
    pub joint_names: Vec<String>,
    /// Tree depth clamped to 0..=5.
    pub hierarchy: Vec<usize>,
    /// Child joint of bone i; bones are ordered by child joint index.
    pub bone_child: Vec<usize>,
    pub root: usize,
}

impl Skeleton {
    /// Build and validate a skeleton from a parent array. `hierarchy`
    /// overrides the depth-derived level assignment when provided.
    pub fn new(joint_names: Vec<String>, parent: Vec<i32>, hierarchy_override: Option<Vec<usize>>) -> Result<Skeleton> {
        let joints = parent.len();
        if joints == 0 {
            return Err(Error::Config("skeleton must have at least one joint".into()));
        }
        if joint_names.len() != joints {
            return Err(Error::Config(format!(
                "{} joint names for {} joints",
                joint_names.len(),
                joints
            )));
        }
        let roots: Vec<usize> = parent.iter().enumerate().filter(|(_, &p)| p < 0).map(|(i, _)| i).collect();
        if roots.len() != 1 {
            return Err(Error::Config(format!("skeleton must have exactly one root, found {}", roots.len())));
        }
        let root = roots[0];
        for (j, &p) in parent.iter().enumerate() {
            if p >= 0 && p as usize >= joints {
                return Err(Error::Config(format!("joint {j} has out-of-range parent {p}")));
            }
        }
        // Depths via BFS from the root; unreachable joints or cycles leave
        // holes we can detect.
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); joints];
        for (j, &p) in parent.iter().enumerate() {
            if p >= 0 {
                children[p as usize].push(j);
            }
        }
        let mut depth = vec![usize::MAX; joints];
        depth[root] = 0;
        let mut queue = std::collections::VecDeque::from([root]);
        let mut seen = 1usize;
        while let Some(j) = queue.pop_front() {
            for &c in &children[j] {
                if depth[c] != usize::MAX {
                    return Err(Error::Config("skeleton parent array contains a cycle".into()));
                }
                depth[c] = depth[j] + 1;
                seen += 1;
                queue.push_back(c);
            }
        }
        if seen != joints {
            return Err(Error::Config("skeleton has joints unreachable from the root".into()));
        }
        let hierarchy = match hierarchy_override {
            Some(h) => {
                if h.len() != joints {
                    return Err(Error::Config("hierarchy override length mismatch".into()));
                }
                if h.iter().any(|&l| l >= HIERARCHY_LEVELS) {
                    return Err(Error::Config(format!("hierarchy levels must be < {HIERARCHY_LEVELS}")));
                }
                if h[root] != 0 {
                    return Err(Error::Config("root must be hierarchy level 0".into()));
                }
                h
            }
            None => depth.iter().map(|&d| d.min(HIERARCHY_LEVELS - 1)).collect(),
        };
        let bone_child: Vec<usize> = (0..joints).filter(|&j| j != root).collect();
        Ok(Skeleton { joints, parent, joint_names, hierarchy, bone_child, root })
    }

    pub fn bones(&self) -> usize {
        self.joints - 1
    }

    /// Bone index whose child is joint `j`, None for the root.
    pub fn bone_of_joint(&self, j: usize) -> Option<usize> {
        self.bone_child.iter().position(|&c| c == j)
    }

    /// Joints ordered so that every parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.joints);
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); self.joints];
        for (j, &p) in self.parent.iter().enumerate() {
            if p >= 0 {
                children[p as usize].push(j);
            }
        }
        let mut queue = std::collections::VecDeque::from([self.root]);
        while let Some(j) = queue.pop_front() {
            order.push(j);
            for &c in &children[j] {
                queue.push_back(c);
            }
        }
        order
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }
}

/// The standard 17-joint Human3.6M tree: pelvis root, two hip-knee-ankle
/// legs, a spine-thorax-neck-head chain, and two shoulder-elbow-wrist arms
/// hanging off the thorax.
pub fn build_h36m_skeleton() -> Skeleton {
    let names = [
        "pelvis",
        "right_hip",
        "right_knee",
        "right_ankle",
        "left_hip",
        "left_knee",
        "left_ankle",
        "spine",
        "thorax",
        "neck",
        "head",
        "left_shoulder",
        "left_elbow",
        "left_wrist",
        "right_shoulder",
        "right_elbow",
        "right_wrist",
    ];
    let parent = vec![-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15];
    Skeleton::new(names.iter().map(|s| s.to_string()).collect(), parent, None)
        .expect("built-in skeleton is valid")
}

/// Binary J x J masks bucketing joint pairs by unweighted tree distance:
/// exactly 1, 2, 3, and >= 4.
#[derive(Debug, Clone)]
pub struct AdjacencyBank {
    pub joints: usize,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub a3: Vec<f64>,
    pub a4plus: Vec<f64>,
}

impl AdjacencyBank {
    pub fn mask(&self, order: usize) -> &[f64] {
        match order {
            1 => &self.a1,
            2 => &self.a2,
            3 => &self.a3,
            4 => &self.a4plus,
            _ => panic!("adjacency order must be 1..=4"),
        }
    }
}

/// All-pairs BFS distances on the undirected tree, bucketed into the four
/// banks. Together with the identity they partition all joint pairs.
pub fn graph_distance_banks(s: &Skeleton) -> AdjacencyBank {
    let j = s.joints;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); j];
    for (c, &p) in s.parent.iter().enumerate() {
        if p >= 0 {
            adj[c].push(p as usize);
            adj[p as usize].push(c);
        }
    }
    let mut bank = AdjacencyBank {
        joints: j,
        a1: vec![0.0; j * j],
        a2: vec![0.0; j * j],
        a3: vec![0.0; j * j],
        a4plus: vec![0.0; j * j],
    };
    for start in 0..j {
        let mut dist = vec![usize::MAX; j];
        dist[start] = 0;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for (other, &d) in dist.iter().enumerate() {
            let slot = match d {
                0 => continue,
                1 => &mut bank.a1,
                2 => &mut bank.a2,
                3 => &mut bank.a3,
                _ => &mut bank.a4plus,
            };
            slot[start * j + other] = 1.0;
        }
    }
    bank
}

/// Assemble joint positions by walking the tree: child = parent + l * d.
///
/// Directions must be unit length within `1e-6` except rows with zero
/// length, which stand for degenerate bones and reproduce the parent
/// position.
pub fn forward_kinematics(s: &Skeleton, root_pos: &[[f64; 3]], lengths: &[f64], dirs: &[f64]) -> Result<PoseSeq3D> {
    let frames = root_pos.len();
    let bones = s.bones();
    if lengths.len() != frames * bones || dirs.len() != frames * bones * 3 {
        return Err(Error::Contract(format!(
            "forward_kinematics: expected {frames}x{bones} lengths and directions"
        )));
    }
    for (i, &l) in lengths.iter().enumerate() {
        if l < 0.0 {
            return Err(Error::Contract(format!("bone length at index {i} is negative")));
        }
    }
    for f in 0..frames {
        for b in 0..bones {
            let o = (f * bones + b) * 3;
            let n2 = dirs[o] * dirs[o] + dirs[o + 1] * dirs[o + 1] + dirs[o + 2] * dirs[o + 2];
            let n = n2.sqrt();
            if (n - 1.0).abs() > 1e-6 && n > 1e-9 {
                return Err(Error::Contract(format!(
                    "direction for frame {f} bone {b} has norm {n}, expected unit"
                )));
            }
        }
    }
    let mut pose = PoseSeq3D::zeros(frames, s.joints, FrameRef::CameraSpace);
    let order = s.topological_order();
    for f in 0..frames {
        pose.set(f, s.root, root_pos[f]);
        for &j in &order {
            if j == s.root {
                continue;
            }
            let b = s.bone_of_joint(j).expect("non-root joint has a bone");
            let p = pose.get(f, s.parent[j] as usize);
            let o = (f * bones + b) * 3;
            let l = lengths[f * bones + b];
            pose.set(f, j, [p[0] + l * dirs[o], p[1] + l * dirs[o + 1], p[2] + l * dirs[o + 2]]);
        }
    }
    Ok(pose)
}

/// Convenience wrapper taking a `BoneDecomp`.
pub fn forward_kinematics_bd(s: &Skeleton, root_pos: &[[f64; 3]], bd: &BoneDecomp) -> Result<PoseSeq3D> {
    forward_kinematics(s, root_pos, &bd.lengths, &bd.dirs)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent BFS depth oracle over the raw parent array.
    fn depth_oracle(parent: &[i32], j: usize) -> usize {
        let mut d = 0;
        let mut cur = j;
        while parent[cur] >= 0 {
            cur = parent[cur] as usize;
            d += 1;
        }
        d
    }

    #[test]
    fn h36m_has_17_joints_16_bones() {
        let s = build_h36m_skeleton();
        assert_eq!(s.joints, 17);
        assert_eq!(s.bones(), 16);
    }

    #[test]
    fn h36m_hierarchy_endpoints() {
        let s = build_h36m_skeleton();
        assert_eq!(s.hierarchy[s.joint_index("pelvis").unwrap()], 0);
        let lw = s.joint_index("left_wrist").unwrap();
        assert_eq!(depth_oracle(&s.parent, lw), 5);
        assert_eq!(s.hierarchy[lw], 5);
        // Depth-derived levels match the oracle with clamping everywhere.
        for j in 0..s.joints {
            assert_eq!(s.hierarchy[j], depth_oracle(&s.parent, j).min(5), "joint {j}");
        }
    }

    #[test]
    fn h36m_uses_all_six_levels() {
        let s = build_h36m_skeleton();
        for level in 0..HIERARCHY_LEVELS {
            assert!(s.hierarchy.contains(&level), "no joint at level {level}");
        }
    }

    #[test]
    fn hierarchy_monotone_along_root_to_leaf_paths() {
        let s = build_h36m_skeleton();
        for j in 0..s.joints {
            if s.parent[j] >= 0 {
                assert!(s.hierarchy[j] >= s.hierarchy[s.parent[j] as usize]);
            }
        }
    }

    #[test]
    fn banks_bucket_by_bfs_distance() {
        let s = build_h36m_skeleton();
        let bank = graph_distance_banks(&s);
        let knee = s.joint_index("right_knee").unwrap();
        let hip = s.joint_index("right_hip").unwrap();
        assert_eq!(bank.a1[knee * 17 + hip], 1.0);
        let lh = s.joint_index("left_hip").unwrap();
        let rh = s.joint_index("right_hip").unwrap();
        assert_eq!(bank.a2[lh * 17 + rh], 1.0, "hips are two steps apart via the pelvis");
    }

    #[test]
    fn banks_partition_all_pairs() {
        let s = build_h36m_skeleton();
        let bank = graph_distance_banks(&s);
        let j = s.joints;
        let mut total = 0.0;
        for r in 0..j {
            for c in 0..j {
                let i = r * j + c;
                let sum = bank.a1[i] + bank.a2[i] + bank.a3[i] + bank.a4plus[i] + if r == c { 1.0 } else { 0.0 };
                assert_eq!(sum, 1.0, "pair ({r},{c})");
                total += sum;
            }
        }
        assert_eq!(total, (j * j) as f64);
        for m in [&bank.a1, &bank.a2, &bank.a3, &bank.a4plus] {
            for r in 0..j {
                assert_eq!(m[r * j + r], 0.0);
                for c in 0..j {
                    assert_eq!(m[r * j + c], m[c * j + r], "symmetry at ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn fk_zero_lengths_collapse_to_root() {
        let s = build_h36m_skeleton();
        let roots = vec![[0.5, -0.25, 3.0]; 2];
        let lengths = vec![0.0; 2 * 16];
        let dirs = vec![0.0; 2 * 16 * 3];
        let pose = forward_kinematics(&s, &roots, &lengths, &dirs).unwrap();
        for f in 0..2 {
            for j in 0..17 {
                assert_eq!(pose.get(f, j), [0.5, -0.25, 3.0]);
            }
        }
    }

    #[test]
    fn fk_single_bone_analytic() {
        let s = Skeleton::new(vec!["a".into(), "b".into()], vec![-1, 0], None).unwrap();
        let pose = forward_kinematics(&s, &[[0.0; 3]], &[0.5], &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(pose.get(0, 1), [0.0, 0.0, 0.5]);
    }

    #[test]
    fn fk_rejects_non_unit_direction() {
        let s = Skeleton::new(vec!["a".into(), "b".into()], vec![-1, 0], None).unwrap();
        let err = forward_kinematics(&s, &[[0.0; 3]], &[0.5], &[0.0, 0.0, 2.0]);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn invalid_skeletons_are_rejected() {
        assert!(Skeleton::new(vec!["a".into(), "b".into()], vec![-1, -1], None).is_err());
        assert!(Skeleton::new(vec!["a".into(), "b".into(), "c".into()], vec![-1, 2, 1], None).is_err());
    }
}
