//! The 256-entry blue-to-red ramp used by every heatmap.
//!
//! Entry `i` is `[i, min(i, 255 - i) / 2, 255 - i]`: red rises and blue
//! falls monotonically, with a faint green hump through the middle.

pub const RAMP: [[u8; 3]; 256] = [
    [0, 0, 255], [1, 0, 254], [2, 1, 253], [3, 1, 252], [4, 2, 251], [5, 2, 250],
    [6, 3, 249], [7, 3, 248], [8, 4, 247], [9, 4, 246], [10, 5, 245], [11, 5, 244],
    [12, 6, 243], [13, 6, 242], [14, 7, 241], [15, 7, 240], [16, 8, 239], [17, 8, 238],
    [18, 9, 237], [19, 9, 236], [20, 10, 235], [21, 10, 234], [22, 11, 233], [23, 11, 232],
    [24, 12, 231], [25, 12, 230], [26, 13, 229], [27, 13, 228], [28, 14, 227], [29, 14, 226],
    [30, 15, 225], [31, 15, 224], [32, 16, 223], [33, 16, 222], [34, 17, 221], [35, 17, 220],
    [36, 18, 219], [37, 18, 218], [38, 19, 217], [39, 19, 216], [40, 20, 215], [41, 20, 214],
    [42, 21, 213], [43, 21, 212], [44, 22, 211], [45, 22, 210], [46, 23, 209], [47, 23, 208],
    [48, 24, 207], [49, 24, 206], [50, 25, 205], [51, 25, 204], [52, 26, 203], [53, 26, 202],
    [54, 27, 201], [55, 27, 200], [56, 28, 199], [57, 28, 198], [58, 29, 197], [59, 29, 196],
    [60, 30, 195], [61, 30, 194], [62, 31, 193], [63, 31, 192], [64, 32, 191], [65, 32, 190],
    [66, 33, 189], [67, 33, 188], [68, 34, 187], [69, 34, 186], [70, 35, 185], [71, 35, 184],
    [72, 36, 183], [73, 36, 182], [74, 37, 181], [75, 37, 180], [76, 38, 179], [77, 38, 178],
    [78, 39, 177], [79, 39, 176], [80, 40, 175], [81, 40, 174], [82, 41, 173], [83, 41, 172],
    [84, 42, 171], [85, 42, 170], [86, 43, 169], [87, 43, 168], [88, 44, 167], [89, 44, 166],
    [90, 45, 165], [91, 45, 164], [92, 46, 163], [93, 46, 162], [94, 47, 161], [95, 47, 160],
    [96, 48, 159], [97, 48, 158], [98, 49, 157], [99, 49, 156], [100, 50, 155], [101, 50, 154],
    [102, 51, 153], [103, 51, 152], [104, 52, 151], [105, 52, 150], [106, 53, 149], [107, 53, 148],
    [108, 54, 147], [109, 54, 146], [110, 55, 145], [111, 55, 144], [112, 56, 143], [113, 56, 142],
    [114, 57, 141], [115, 57, 140], [116, 58, 139], [117, 58, 138], [118, 59, 137], [119, 59, 136],
    [120, 60, 135], [121, 60, 134], [122, 61, 133], [123, 61, 132], [124, 62, 131], [125, 62, 130],
    [126, 63, 129], [127, 63, 128], [128, 63, 127], [129, 63, 126], [130, 62, 125], [131, 62, 124],
    [132, 61, 123], [133, 61, 122], [134, 60, 121], [135, 60, 120], [136, 59, 119], [137, 59, 118],
    [138, 58, 117], [139, 58, 116], [140, 57, 115], [141, 57, 114], [142, 56, 113], [143, 56, 112],
    [144, 55, 111], [145, 55, 110], [146, 54, 109], [147, 54, 108], [148, 53, 107], [149, 53, 106],
    [150, 52, 105], [151, 52, 104], [152, 51, 103], [153, 51, 102], [154, 50, 101], [155, 50, 100],
    [156, 49, 99], [157, 49, 98], [158, 48, 97], [159, 48, 96], [160, 47, 95], [161, 47, 94],
    [162, 46, 93], [163, 46, 92], [164, 45, 91], [165, 45, 90], [166, 44, 89], [167, 44, 88],
    [168, 43, 87], [169, 43, 86], [170, 42, 85], [171, 42, 84], [172, 41, 83], [173, 41, 82],
    [174, 40, 81], [175, 40, 80], [176, 39, 79], [177, 39, 78], [178, 38, 77], [179, 38, 76],
    [180, 37, 75], [181, 37, 74], [182, 36, 73], [183, 36, 72], [184, 35, 71], [185, 35, 70],
    [186, 34, 69], [187, 34, 68], [188, 33, 67], [189, 33, 66], [190, 32, 65], [191, 32, 64],
    [192, 31, 63], [193, 31, 62], [194, 30, 61], [195, 30, 60], [196, 29, 59], [197, 29, 58],
    [198, 28, 57], [199, 28, 56], [200, 27, 55], [201, 27, 54], [202, 26, 53], [203, 26, 52],
    [204, 25, 51], [205, 25, 50], [206, 24, 49], [207, 24, 48], [208, 23, 47], [209, 23, 46],
    [210, 22, 45], [211, 22, 44], [212, 21, 43], [213, 21, 42], [214, 20, 41], [215, 20, 40],
    [216, 19, 39], [217, 19, 38], [218, 18, 37], [219, 18, 36], [220, 17, 35], [221, 17, 34],
    [222, 16, 33], [223, 16, 32], [224, 15, 31], [225, 15, 30], [226, 14, 29], [227, 14, 28],
    [228, 13, 27], [229, 13, 26], [230, 12, 25], [231, 12, 24], [232, 11, 23], [233, 11, 22],
    [234, 10, 21], [235, 10, 20], [236, 9, 19], [237, 9, 18], [238, 8, 17], [239, 8, 16],
    [240, 7, 15], [241, 7, 14], [242, 6, 13], [243, 6, 12], [244, 5, 11], [245, 5, 10],
    [246, 4, 9], [247, 4, 8], [248, 3, 7], [249, 3, 6], [250, 2, 5], [251, 2, 4],
    [252, 1, 3], [253, 1, 2], [254, 0, 1], [255, 0, 0],
];
