use super::{Dataset, LabeledSample};
use crate::error::{Error, Result};
use image::imageops::FilterType;
use ndarray::{ArrayD, IxDyn};
use std::path::Path;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FolderLoadStats {
    pub loaded: usize,
    pub skipped_unreadable: usize,
}

/// Load `root/<domain-name>/<file>` with labels from the subdirectory names,
/// sorted lexicographically to fix the label indexing. Images are resized to
/// `image_size` and normalized to [-1, 1]. Unreadable files are skipped and
/// counted; an empty domain directory is an error.
pub fn load_image_folder(root: &Path, image_size: usize) -> Result<(Dataset, FolderLoadStats)> {
    if !root.is_dir() {
        return Err(Error::invalid_input(format!(
            "{} is not a directory",
            root.display()
        )));
    }
    let mut domains: Vec<String> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    domains.sort();
    if domains.is_empty() {
        return Err(Error::invalid_input(format!(
            "{} contains no domain subdirectories",
            root.display()
        )));
    }

    let mut samples = Vec::new();
    let mut stats = FolderLoadStats::default();
    for (label, domain) in domains.iter().enumerate() {
        let dir = root.join(domain);
        let mut files: Vec<_> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let mut loaded_any = false;
        for file in files {
            let img = match image::open(&file) {
                Ok(img) => img,
                Err(_) => {
                    stats.skipped_unreadable += 1;
                    continue;
                }
            };
            let resized = img
                .resize_exact(image_size as u32, image_size as u32, FilterType::Triangle)
                .to_rgb8();
            let mut arr = ArrayD::<f32>::zeros(IxDyn(&[3, image_size, image_size]));
            for (x, y, pixel) in resized.enumerate_pixels() {
                for ch in 0..3 {
                    arr[IxDyn(&[ch, y as usize, x as usize])] =
                        pixel.0[ch] as f32 / 127.5 - 1.0;
                }
            }
            samples.push(LabeledSample {
                image: arr,
                clean_label: label,
                noisy_label: label,
                sample_id: format!(
                    "{domain}/{}",
                    file.file_name().unwrap().to_string_lossy()
                ),
            });
            loaded_any = true;
            stats.loaded += 1;
        }
        if !loaded_any {
            return Err(Error::invalid_input(format!(
                "domain directory {} has no readable images",
                dir.display()
            )));
        }
    }
    let dataset = Dataset::from_samples(samples, domains.len(), image_size, 3, domains)?;
    Ok((dataset, stats))
}

/// Write a dataset back out as `dir/<domain-name>/<sample>.png`.
pub fn export_image_folder(dataset: &Dataset, dir: &Path) -> Result<()> {
    for sample in dataset.samples() {
        let domain = &dataset.domain_names[sample.clean_label];
        let out_dir = dir.join(domain);
        std::fs::create_dir_all(&out_dir)?;
        let size = dataset.image_size as u32;
        let mut img = image::RgbImage::new(size, size);
        for (x, y, pixel) in img.enumerate_pixels_mut() {
            for ch in 0..dataset.image_channels.min(3) {
                let v = sample.image[IxDyn(&[ch, y as usize, x as usize])];
                pixel.0[ch] = (((v + 1.0) * 127.5).round()).clamp(0.0, 255.0) as u8;
            }
        }
        let name = sample
            .sample_id
            .rsplit('/')
            .next()
            .unwrap_or(&sample.sample_id);
        let path = out_dir.join(format!("{name}.png"));
        img.save(&path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
