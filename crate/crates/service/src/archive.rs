//! Export archives: the export files of a session, optionally with frame
//! images, packed into a reproducible tar.

use std::path::Path;

use insitu_core::export::{export_files, ExportFormat};
use insitu_core::raster::sequence_file_name;
use insitu_core::raster::ImageFrame;

use crate::error::ApiError;
use crate::session::{image_name, Session};

/// Packs files with fixed metadata so identical content gives identical
/// bytes.
pub fn tar_bytes(files: &[(String, Vec<u8>)]) -> Result<Vec<u8>, ApiError> {
    let mut builder = tar::Builder::new(Vec::new());
    for (path, bytes) in files {
        let mut header = tar::Header::new_ustar();
        header.set_size(bytes.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        header.set_entry_type(tar::EntryType::Regular);
        builder.append_data(&mut header, path, bytes.as_slice())?;
    }
    Ok(builder.into_inner()?)
}

/// Files of a session export. With `images`, every dataset frame stored in
/// `frames_dir` is added as PNG under `images/`.
pub fn session_export_files(
    session: &Session,
    format: ExportFormat,
    frames_dir: Option<&Path>,
) -> Result<Vec<(String, Vec<u8>)>, ApiError> {
    let ds = session.dataset();
    let mut files = export_files(&ds, format)?;
    if let Some(dir) = frames_dir {
        for (i, f) in ds.frames.iter().enumerate() {
            let index = session
                .result
                .as_ref()
                .map(|r| r.frames[i])
                .unwrap_or(crate::session::REFERENCE_FRAME);
            let path = dir.join(sequence_file_name(index));
            if path.exists() {
                let png = ImageFrame::read_pgm(&path, index)?.to_png();
                debug_assert_eq!(f.image, image_name(index));
                files.push((f.image.clone(), png));
            }
        }
    }
    Ok(files)
}

pub fn session_archive(
    session: &Session,
    format: ExportFormat,
    frames_dir: Option<&Path>,
) -> Result<Vec<u8>, ApiError> {
    tar_bytes(&session_export_files(session, format, frames_dir)?)
}
