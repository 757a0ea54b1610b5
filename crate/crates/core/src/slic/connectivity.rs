//! Connected-component cleanup of label maps.

use std::collections::VecDeque;

/// Merges every 4-connected component smaller than `min_size` into its
/// largest adjacent component and relabels contiguously in raster order of
/// first appearance. Disconnected parts of one input label become separate
/// output labels.
pub fn enforce_connectivity(
    labels: &[u32],
    height: usize,
    width: usize,
    min_size: usize,
) -> Vec<u32> {
    let active = vec![true; labels.len()];
    enforce_connectivity_masked(labels, &active, height, width, min_size)
        .into_iter()
        .map(|l| l.expect("every pixel is active"))
        .collect()
}

/// Connectivity pass restricted to `active` pixels; inactive pixels act as
/// barriers and come back as `None`.
pub(crate) fn enforce_connectivity_masked(
    labels: &[u32],
    active: &[bool],
    height: usize,
    width: usize,
    min_size: usize,
) -> Vec<Option<u32>> {
    let n = height * width;
    assert_eq!(labels.len(), n);
    assert_eq!(active.len(), n);

    const NONE: usize = usize::MAX;
    let mut comp = vec![NONE; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..n {
        if !active[start] || comp[start] != NONE {
            continue;
        }
        let id = members.len();
        let label = labels[start];
        let mut list = Vec::new();
        comp[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            list.push(p);
            for q in neighbors4(p, height, width) {
                if active[q] && comp[q] == NONE && labels[q] == label {
                    comp[q] = id;
                    queue.push_back(q);
                }
            }
        }
        members.push(list);
    }

    // union-find over components, sizes tracked at roots
    let count = members.len();
    let mut parent: Vec<usize> = (0..count).collect();
    let mut size: Vec<usize> = members.iter().map(Vec::len).collect();

    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    loop {
        let mut changed = false;
        for id in 0..count {
            let root = find(&mut parent, id);
            if root != id || size[root] >= min_size {
                continue;
            }
            // largest adjacent root; ties go to the smaller root id
            let mut best: Option<(usize, usize)> = None;
            for &p in &members[root] {
                for q in neighbors4(p, height, width) {
                    if !active[q] {
                        continue;
                    }
                    let r = find(&mut parent, comp[q]);
                    if r == root {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bs, br)) => size[r] > bs || (size[r] == bs && r < br),
                    };
                    if better {
                        best = Some((size[r], r));
                    }
                }
            }
            if let Some((_, target)) = best {
                parent[root] = target;
                size[target] += size[root];
                let moved = std::mem::take(&mut members[root]);
                members[target].extend(moved);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut new_label = vec![u32::MAX; count];
    let mut next = 0u32;
    let mut out = vec![None; n];
    for p in 0..n {
        if !active[p] {
            continue;
        }
        let r = find(&mut parent, comp[p]);
        if new_label[r] == u32::MAX {
            new_label[r] = next;
            next += 1;
        }
        out[p] = Some(new_label[r]);
    }
    out
}

#[inline]
pub(crate) fn neighbors4(p: usize, height: usize, width: usize) -> impl Iterator<Item = usize> {
    let y = p / width;
    let x = p % width;
    let up = (y > 0).then(|| p - width);
    let down = (y + 1 < height).then(|| p + width);
    let left = (x > 0).then(|| p - 1);
    let right = (x + 1 < width).then(|| p + 1);
    [up, left, right, down].into_iter().flatten()
}

/// Sizes of all 4-connected same-label components, found by flood fill.
pub fn component_sizes(labels: &[u32], height: usize, width: usize) -> Vec<usize> {
    let mut seen = vec![false; labels.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for s in 0..labels.len() {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        stack.push(s);
        let mut count = 0;
        while let Some(p) = stack.pop() {
            count += 1;
            for q in neighbors4(p, height, width) {
                if !seen[q] && labels[q] == labels[s] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        sizes.push(count);
    }
    sizes
}
