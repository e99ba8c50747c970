#include "dadiff/image.hpp"

#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <stdexcept>

namespace dadiff {

Image make_image(int width, int height) {
    Image img;
    img.width = width;
    img.height = height;
    img.rgb.assign(static_cast<std::size_t>(width) * height * 3, 0);
    return img;
}

void write_png(const std::string& path, const Image& img) {
    cv::Mat m(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            auto& px = m.at<cv::Vec3b>(y, x); // BGR
            px[0] = img.at(y, x, 2);
            px[1] = img.at(y, x, 1);
            px[2] = img.at(y, x, 0);
        }
    if (!cv::imwrite(path, m))
        throw std::runtime_error("write_png: failed to write " + path);
}

Image read_png(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw std::runtime_error("read_png: failed to read " + path);
    Image img = make_image(m.cols, m.rows);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) {
            const auto& px = m.at<cv::Vec3b>(y, x);
            img.at(y, x, 0) = px[2];
            img.at(y, x, 1) = px[1];
            img.at(y, x, 2) = px[0];
        }
    return img;
}

Tensor crop_chw(const Image& img, double cx, double cy, int size) {
    Tensor out({3, static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
    int x0 = static_cast<int>(std::lround(cx)) - size / 2;
    int y0 = static_cast<int>(std::lround(cy)) - size / 2;
    for (int y = 0; y < size; ++y) {
        int sy = y0 + y;
        if (sy < 0 || sy >= img.height) continue;
        for (int x = 0; x < size; ++x) {
            int sx = x0 + x;
            if (sx < 0 || sx >= img.width) continue;
            for (int c = 0; c < 3; ++c)
                out.at3(static_cast<std::size_t>(c), static_cast<std::size_t>(y),
                        static_cast<std::size_t>(x)) = img.at(sy, sx, c) / 255.0;
        }
    }
    return out;
}

} // namespace dadiff
