use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use super::align::Landmarks5;
use super::pgm::read_pgm;
use crate::error::{Error, Result};
use crate::tensor::{rng_from_seed, Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
}

/// One image of the dataset, addressed relative to the dataset root.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRef {
    /// `<identity>/<file>` with `/` separators.
    pub path: String,
    pub identity: usize,
    pub landmarks: Option<Landmarks5>,
    pub split: Split,
}

/// A loaded image with its label.
#[derive(Debug, Clone)]
pub struct FaceSample<T: Element = f32> {
    /// `[1, H, W]`, intensities in `[0, 1]`.
    pub image: Tensor<T>,
    pub landmarks: Option<Landmarks5>,
    pub identity: usize,
    pub source: PathBuf,
}

/// Samples sorted by path; identity labels are indices into `identities`,
/// which is sorted by directory name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub identities: Vec<String>,
    pub samples: Vec<SampleRef>,
    /// Images dropped for lack of a landmark entry.
    pub skipped: usize,
}

impl DatasetIndex {
    pub fn num_identities(&self) -> usize {
        self.identities.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample positions per identity, in index order.
    pub fn by_identity(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.identities.len()];
        for (i, s) in self.samples.iter().enumerate() {
            groups[s.identity].push(i);
        }
        groups
    }

    pub fn positions(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| self.samples[i].split == split)
            .collect()
    }

    pub fn load_sample<T: Element>(&self, sample: &SampleRef) -> Result<FaceSample<T>> {
        let source = self.root.join(&sample.path);
        Ok(FaceSample {
            image: read_pgm(&source)?.to_tensor(),
            landmarks: sample.landmarks,
            identity: sample.identity,
            source,
        })
    }
}

/// Parses `relative/path x1 y1 .. x5 y5` lines. Blank lines and `#` comments are ignored.
pub fn parse_landmarks(text: &str, path: &Path) -> Result<HashMap<String, Landmarks5>> {
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 11 {
            return Err(parse_err(format!(
                "expected a path and 10 coordinates, found {} fields",
                fields.len()
            )));
        }
        let mut c = [0.0; 10];
        for (slot, f) in c.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| parse_err(format!("invalid coordinate {f:?}")))?;
        }
        let lm = Landmarks5::from_coords(c).map_err(|e| parse_err(e.to_string()))?;
        out.insert(fields[0].replace('\\', "/"), lm);
    }
    Ok(out)
}

pub fn read_landmarks(path: impl AsRef<Path>) -> Result<HashMap<String, Landmarks5>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_landmarks(&text, path)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Indexes `root/<identity>/<image>.pgm`. With a landmark file, images
/// lacking an entry are skipped and counted. Every sample starts in
/// [`Split::Train`].
pub fn load_dataset(root: impl AsRef<Path>, landmark_file: Option<&Path>) -> Result<DatasetIndex> {
    let root = root.as_ref();
    let landmarks = landmark_file.map(read_landmarks).transpose()?;
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for dir in sorted_entries(root)? {
        if !dir.is_dir() {
            continue;
        }
        let name = dir
            .file_name()
            .expect("read_dir entries have names")
            .to_string_lossy()
            .into_owned();
        let files: Vec<String> = sorted_entries(&dir)?
            .into_iter()
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
            .map(|p| format!("{name}/{}", p.file_name().unwrap().to_string_lossy()))
            .collect();
        groups.insert(name, files);
    }
    let mut index = DatasetIndex {
        root: root.to_path_buf(),
        ..DatasetIndex::default()
    };
    for (name, files) in groups {
        let mut kept = Vec::new();
        for path in files {
            let lm = match &landmarks {
                Some(map) => match map.get(&path) {
                    Some(lm) => Some(*lm),
                    None => {
                        index.skipped += 1;
                        continue;
                    }
                },
                None => None,
            };
            kept.push((path, lm));
        }
        if kept.is_empty() {
            continue;
        }
        let identity = index.identities.len();
        index.identities.push(name);
        index
            .samples
            .extend(kept.into_iter().map(|(path, landmarks)| SampleRef {
                path,
                identity,
                landmarks,
                split: Split::Train,
            }));
    }
    if index.skipped > 0 {
        log::warn!("{} images without landmark entries were skipped", index.skipped);
    }
    Ok(index)
}

/// Moves one seeded-random sample of every identity with at least two
/// images to [`Split::Val`]; everything else is train.
pub fn split_train_val(index: &DatasetIndex, seed: u64) -> DatasetIndex {
    let labels: Vec<usize> = index.samples.iter().map(|s| s.identity).collect();
    let mut out = index.clone();
    for (s, tag) in out.samples.iter_mut().zip(split_labels(&labels, seed)) {
        s.split = tag;
    }
    out
}

/// The split rule of [`split_train_val`] applied to bare labels.
pub fn split_labels(labels: &[usize], seed: u64) -> Vec<Split> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    let mut rng = rng_from_seed(seed);
    let mut out = vec![Split::Train; labels.len()];
    for group in groups {
        if group.len() >= 2 {
            out[group[rng.random_range(0..group.len())]] = Split::Val;
        }
    }
    out
}

/// Images held in memory with labels and split tags, ready for training.
#[derive(Debug, Clone)]
pub struct FaceDataset<T: Element = f32> {
    /// Each `[1, H, W]`.
    pub images: Vec<Tensor<T>>,
    pub labels: Vec<usize>,
    pub split: Vec<Split>,
    pub num_identities: usize,
}

impl<T: Element> FaceDataset<T> {
    pub fn new(images: Vec<Tensor<T>>, labels: Vec<usize>, split: Vec<Split>) -> Result<Self> {
        if images.len() != labels.len() || images.len() != split.len() {
            return Err(Error::InvalidInput("images, labels and split differ in length".into()));
        }
        if let Some(first) = images.first() {
            if first.shape().rank() != 3 || first.dims()[0] != 1 || images.iter().any(|i| i.dims() != first.dims()) {
                return Err(Error::InvalidInput("images must share one [1, H, W] shape".into()));
            }
        }
        let num_identities = labels.iter().max().map_or(0, |m| m + 1);
        Ok(FaceDataset {
            images,
            labels,
            split,
            num_identities,
        })
    }

    /// Reads every indexed image in parallel, preserving index order.
    pub fn load(index: &DatasetIndex) -> Result<Self> {
        let images = index
            .samples
            .par_iter()
            .map(|s| index.load_sample::<T>(s).map(|f| f.image))
            .collect::<Result<Vec<_>>>()?;
        let mut ds = FaceDataset::new(
            images,
            index.samples.iter().map(|s| s.identity).collect(),
            index.samples.iter().map(|s| s.split).collect(),
        )?;
        ds.num_identities = index.num_identities();
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(H, W)` of every image, if any.
    pub fn image_size(&self) -> Option<(usize, usize)> {
        self.images.first().map(|i| (i.dims()[1], i.dims()[2]))
    }

    pub fn positions(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::pgm::{write_pgm, GrayImage};

    fn make_tree(root: &Path, layout: &[(&str, usize)]) {
        for (id, n) in layout {
            fs::create_dir_all(root.join(id)).unwrap();
            for k in 0..*n {
                let img = GrayImage::new(2, 2, vec![k as u8; 4]).unwrap();
                write_pgm(root.join(id).join(format!("{k}.pgm")), &img).unwrap();
            }
        }
    }

    const LM: &str = "30 40 70 40 50 60 35 90 65 90";

    #[test]
    fn empty_root() {
        let dir = tempfile::tempdir().unwrap();
        let index = load_dataset(dir.path(), None).unwrap();
        assert!(index.is_empty());
        assert_eq!(index.num_identities(), 0);
    }

    #[test]
    fn three_identities_two_images() {
        let dir = tempfile::tempdir().unwrap();
        make_tree(dir.path(), &[("b", 2), ("a", 2), ("c", 2)]);
        let index = load_dataset(dir.path(), None).unwrap();
        assert_eq!(index.len(), 6);
        assert_eq!(index.identities, vec!["a", "b", "c"]);
        assert_eq!(index.samples[2].path, "b/0.pgm");
        assert_eq!(index.samples[2].identity, 1);
    }

    #[test]
    fn missing_landmark_entry_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        make_tree(&data, &[("a", 2), ("b", 2), ("c", 2)]);
        let lm_path = dir.path().join("lm.txt");
        let lines: Vec<String> = ["a/0.pgm", "a/1.pgm", "b/0.pgm", "c/0.pgm", "c/1.pgm"]
            .iter()
            .map(|p| format!("{p} {LM}"))
            .collect();
        fs::write(&lm_path, lines.join("\n")).unwrap();
        let index = load_dataset(&data, Some(&lm_path)).unwrap();
        assert_eq!(index.len(), 5);
        assert_eq!(index.skipped, 1);
        assert!(index.samples.iter().all(|s| s.landmarks.is_some()));
    }

    #[test]
    fn malformed_landmark_line_reports_line_number() {
        let text = format!("a/0.pgm {LM}\n\na/1.pgm 1 2 3\n");
        match parse_landmarks(&text, Path::new("lm.txt")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = format!("a/0.pgm {}\n", LM.replace("50", "x"));
        assert!(matches!(
            parse_landmarks(&text, Path::new("lm")),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn unreadable_root() {
        assert!(matches!(
            load_dataset("/nonexistent/for/sure", None),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn split_rules() {
        let dir = tempfile::tempdir().unwrap();
        make_tree(dir.path(), &[("five", 5), ("one", 1), ("two", 2)]);
        let index = load_dataset(dir.path(), None).unwrap();
        let split = split_train_val(&index, 7);
        let count = |id: usize, s: Split| {
            split
                .samples
                .iter()
                .filter(|x| x.identity == id && x.split == s)
                .count()
        };
        assert_eq!((count(0, Split::Train), count(0, Split::Val)), (4, 1));
        assert_eq!((count(1, Split::Train), count(1, Split::Val)), (1, 0));
        assert_eq!((count(2, Split::Train), count(2, Split::Val)), (1, 1));
        assert_eq!(split, split_train_val(&index, 7));

        let train = split.positions(Split::Train);
        let val = split.positions(Split::Val);
        assert_eq!(train.len() + val.len(), index.len());
        assert!(train.iter().all(|i| !val.contains(i)));

        let ds = FaceDataset::<f32>::load(&split).unwrap();
        assert_eq!(ds.len(), 8);
        assert_eq!(ds.image_size(), Some((2, 2)));
        assert_eq!(ds.positions(Split::Val), val);
    }
}
