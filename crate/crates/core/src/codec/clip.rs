use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

const CLIP_MAGIC: &[u8; 4] = b"ACLP";
const CLIP_VERSION: u16 = 1;

/// Pixel video, layout `[frames, height, width, channels]`, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl VideoClip {
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let [frames, height, width, channels] = dims;
        if frames == 0 || height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid(format!("empty clip dims {dims:?}")));
        }
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::shape("clip", &dims, &[data.len()]));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(VideoClip {
            frames,
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(dims: [usize; 4], value: f64) -> Result<Self> {
        VideoClip::new(dims, vec![value; dims.iter().product()])
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.frames, self.height, self.width, self.channels]
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn index(&self, t: usize, y: usize, x: usize, c: usize) -> usize {
        ((t * self.height + y) * self.width + x) * self.channels + c
    }

    pub fn get(&self, t: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(t, y, x, c)]
    }

    pub fn frame_data(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    /// Frames `[start, start + len)`.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<VideoClip> {
        if len == 0 || start + len > self.frames {
            return Err(Error::invalid(format!(
                "frame range {start}..{} outside clip of {} frames",
                start + len,
                self.frames
            )));
        }
        let n = self.frame_len();
        Ok(VideoClip {
            frames: len,
            data: self.data[start * n..(start + len) * n].to_vec(),
            ..*self
        })
    }

    pub fn frame(&self, t: usize) -> Result<VideoClip> {
        self.slice_frames(t, 1)
    }

    /// Clip with frame `t` repeated `n` times.
    pub fn repeat_frame(&self, t: usize, n: usize) -> Result<VideoClip> {
        let f = self.frame(t)?;
        VideoClip::concat_frames(&vec![&f; n])
    }

    pub fn concat_frames(parts: &[&VideoClip]) -> Result<VideoClip> {
        let first = parts.first().ok_or_else(|| Error::invalid("no clips to concatenate"))?;
        let mut data = Vec::new();
        let mut frames = 0;
        for p in parts {
            if p.dims()[1..] != first.dims()[1..] {
                return Err(Error::shape("concat_frames", &first.dims(), &p.dims()));
            }
            frames += p.frames;
            data.extend_from_slice(&p.data);
        }
        Ok(VideoClip {
            frames,
            data,
            ..**first
        })
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.dims().to_vec(), self.data.clone()).expect("dims match data")
    }

    /// `[c, f, H, W]` layout used by the convolutional encoders.
    pub fn to_channels_first(&self) -> Tensor {
        let [f, h, w, c] = self.dims();
        let plane = f * h * w;
        let mut out = vec![0.0; self.data.len()];
        for (i, px) in self.data.chunks(c).enumerate() {
            for (k, &v) in px.iter().enumerate() {
                out[k * plane + i] = v;
            }
        }
        Tensor::new(vec![c, f, h, w], out).expect("dims match data")
    }

    /// Mean absolute difference between consecutive frames; length `frames - 1`.
    pub fn frame_diffs(&self) -> Vec<f64> {
        let n = self.frame_len();
        (1..self.frames)
            .map(|t| {
                let a = &self.data[(t - 1) * n..t * n];
                let b = &self.data[t * n..(t + 1) * n];
                a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64
            })
            .collect()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(22 + 4 * self.data.len());
        buf.extend_from_slice(CLIP_MAGIC);
        buf.extend_from_slice(&CLIP_VERSION.to_le_bytes());
        for d in self.dims() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<VideoClip> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        let mut r = ByteReader::new(&buf, path);
        r.magic(CLIP_MAGIC)?;
        let version = r.u16()?;
        if version != CLIP_VERSION {
            return Err(Error::format(format!("{}: unsupported clip version {version}", path.display())));
        }
        let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let data = r.f32s(dims.iter().product())?;
        r.finish()?;
        VideoClip::new(dims, data)
    }
}

/// Latent video `Z`, layout `[frames, height, width, channels]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentClip {
    pub(crate) tensor: Tensor,
    pub r_t: usize,
    pub r_s: usize,
}

impl LatentClip {
    pub fn new(tensor: Tensor, r_t: usize, r_s: usize) -> Result<Self> {
        if tensor.rank() != 4 {
            return Err(Error::shape("latent", tensor.shape(), &[0, 0, 0, 0]));
        }
        Ok(LatentClip { tensor, r_t, r_s })
    }

    pub fn dims(&self) -> [usize; 4] {
        let s = self.tensor.shape();
        [s[0], s[1], s[2], s[3]]
    }

    pub fn frames(&self) -> usize {
        self.dims()[0]
    }

    pub fn channels(&self) -> usize {
        self.dims()[3]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }

    pub fn data(&self) -> &[f64] {
        self.tensor.data()
    }

    pub fn with_tensor(&self, tensor: Tensor) -> Result<LatentClip> {
        if tensor.shape() != self.tensor.shape() {
            return Err(Error::shape("latent", self.tensor.shape(), tensor.shape()));
        }
        Ok(LatentClip { tensor, ..*self })
    }

    /// Joins latents with equal strides and plane shape along time.
    pub fn concat_frames(parts: &[LatentClip]) -> Result<LatentClip> {
        let first = parts.first().ok_or_else(|| Error::invalid("no latents to concatenate"))?;
        let [_, h, w, c] = first.dims();
        let mut data = Vec::new();
        let mut frames = 0;
        for p in parts {
            let [f, ph, pw, pc] = p.dims();
            if [ph, pw, pc] != [h, w, c] || (p.r_t, p.r_s) != (first.r_t, first.r_s) {
                return Err(Error::shape("latent concat", &[h, w, c], &[ph, pw, pc]));
            }
            frames += f;
            data.extend_from_slice(p.data());
        }
        LatentClip::new(Tensor::new(vec![frames, h, w, c], data)?, first.r_t, first.r_s)
    }

    pub fn slice_frames(&self, start: usize, len: usize) -> Result<LatentClip> {
        let [f, h, w, c] = self.dims();
        if len == 0 || start + len > f {
            return Err(Error::invalid(format!("latent frame range {start}+{len} outside {f}")));
        }
        let n = h * w * c;
        let t = Tensor::new(vec![len, h, w, c], self.data()[start * n..(start + len) * n].to_vec())?;
        Ok(LatentClip { tensor: t, ..*self })
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: String,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8], path: &Path) -> Self {
        ByteReader {
            buf,
            pos: 0,
            what: path.display().to_string(),
        }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(format!("{}: truncated file", self.what)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn magic(&mut self, m: &[u8; 4]) -> Result<()> {
        if self.take(4)? != m {
            return Err(Error::format(format!(
                "{}: bad magic, expected {}",
                self.what,
                String::from_utf8_lossy(m)
            )));
        }
        Ok(())
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::format("size overflow"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect())
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::format("size overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::format(format!("{}: invalid utf-8", self.what)))
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(format!("{}: trailing bytes", self.what)));
        }
        Ok(())
    }
}
